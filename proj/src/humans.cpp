#include "reachmpc/humans.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace reachmpc {

namespace {

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string field;
  while (std::getline(ss, field, ',')) out.push_back(field);
  return out;
}

double parse_double(const std::string& s, int line_no) {
  try {
    size_t pos = 0;
    const double v = std::stod(s, &pos);
    if (pos != s.size()) throw std::invalid_argument("trailing");
    return v;
  } catch (const std::exception&) {
    throw std::runtime_error("trajectory parse error at line " + std::to_string(line_no) +
                             ": bad number '" + s + "'");
  }
}

}  // namespace

JointTrajectory load_trajectory(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open trajectory file: " + path);

  std::string line;
  int line_no = 0;
  if (!std::getline(in, line)) throw std::runtime_error("empty trajectory file: " + path);
  ++line_no;

  struct PartialFrame {
    double t = 0.0;
    std::array<Eigen::Vector3d, kNumJoints> joints{};
    std::array<bool, kNumJoints> seen{};
  };
  std::map<long, PartialFrame> partial;

  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto f = split_csv(line);
    if (f.size() != 6) {
      throw std::runtime_error("trajectory parse error at line " + std::to_string(line_no) +
                               ": expected 6 fields, got " + std::to_string(f.size()));
    }
    const long frame_id = std::lround(parse_double(f[0], line_no));
    const double t = parse_double(f[1], line_no);
    const long jid = std::lround(parse_double(f[2], line_no));
    if (jid < 0 || jid >= kNumJoints) {
      throw std::runtime_error("trajectory parse error at line " + std::to_string(line_no) +
                               ": joint id out of range");
    }
    auto& pf = partial[frame_id];
    if (pf.seen[jid]) {
      throw std::runtime_error("trajectory parse error at line " + std::to_string(line_no) +
                               ": duplicate joint " + std::to_string(jid) + " in frame " +
                               std::to_string(frame_id));
    }
    pf.t = t;
    pf.joints[jid] =
        Eigen::Vector3d(parse_double(f[3], line_no), parse_double(f[4], line_no),
                        parse_double(f[5], line_no));
    pf.seen[jid] = true;
  }

  JointTrajectory traj;
  for (const auto& [fid, pf] : partial) {
    for (int j = 0; j < kNumJoints; ++j) {
      if (!pf.seen[j]) {
        throw std::runtime_error("trajectory parse error: frame " + std::to_string(fid) +
                                 " is missing joint " + std::to_string(j));
      }
    }
    HumanFrame hf;
    hf.t = pf.t;
    hf.joints = pf.joints;
    hf.observed_at.fill(pf.t);
    traj.frames.push_back(hf);
  }
  if (traj.frames.empty()) throw std::runtime_error("trajectory has no frames: " + path);
  for (size_t i = 1; i < traj.frames.size(); ++i) {
    if (traj.frames[i].t <= traj.frames[i - 1].t) {
      throw std::runtime_error("trajectory timestamps not strictly increasing near frame " +
                               std::to_string(i));
    }
  }
  traj.rate = traj.frames.size() > 1
                  ? (traj.frames.size() - 1) / (traj.t_last() - traj.t_first())
                  : 0.0;
  return traj;
}

void save_trajectory(const JointTrajectory& traj, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write trajectory file: " + path);
  out << "frame,time,joint,x,y,z\n";
  out.precision(12);
  for (size_t i = 0; i < traj.frames.size(); ++i) {
    const auto& f = traj.frames[i];
    for (int j = 0; j < kNumJoints; ++j) {
      out << i << ',' << f.t << ',' << j << ',' << f.joints[j].x() << ','
          << f.joints[j].y() << ',' << f.joints[j].z() << '\n';
    }
  }
}

SampledFrame sample(const JointTrajectory& traj, double t) {
  SampledFrame out;
  const auto& fs = traj.frames;
  if (t <= fs.front().t) {
    out.frame = fs.front();
    out.clamped = t < fs.front().t;
    return out;
  }
  if (t >= fs.back().t) {
    out.frame = fs.back();
    out.clamped = t > fs.back().t;
    return out;
  }
  auto it = std::lower_bound(fs.begin(), fs.end(), t,
                             [](const HumanFrame& f, double tv) { return f.t < tv; });
  const HumanFrame& hi = *it;
  const HumanFrame& lo = *(it - 1);
  const double w = (t - lo.t) / (hi.t - lo.t);
  out.frame.t = t;
  for (int j = 0; j < kNumJoints; ++j) {
    out.frame.joints[j] = (1.0 - w) * lo.joints[j] + w * hi.joints[j];
  }
  out.frame.observed_at.fill(t);
  return out;
}

JointTrajectory transform_trajectory(const JointTrajectory& traj,
                                     const Eigen::Vector3d& offset, double yaw) {
  JointTrajectory out = traj;
  const double c = std::cos(yaw), s = std::sin(yaw);
  for (auto& f : out.frames) {
    for (auto& j : f.joints) {
      const double x = c * j.x() - s * j.y();
      const double y = s * j.x() + c * j.y();
      j = Eigen::Vector3d(x, y, j.z()) + offset;
    }
  }
  return out;
}

JointTrajectory synth_walk(double speed, double heading, double duration, double rate,
                           std::uint64_t seed, double v_max, double a_max) {
  if (speed < 0.0 || speed > v_max) {
    throw std::invalid_argument("synth_walk: speed outside [0, v_max]");
  }
  if (duration <= 0.0 || rate <= 0.0) {
    throw std::invalid_argument("synth_walk: duration and rate must be positive");
  }

  // Neutral standing pose, local frame facing +x.
  std::array<Eigen::Vector3d, kNumJoints> base{};
  base[joint::pelvis] = {0.00, 0.00, 0.95};
  base[joint::left_hip] = {0.00, 0.10, 0.92};
  base[joint::right_hip] = {0.00, -0.10, 0.92};
  base[joint::spine1] = {0.00, 0.00, 1.07};
  base[joint::left_knee] = {0.00, 0.10, 0.50};
  base[joint::right_knee] = {0.00, -0.10, 0.50};
  base[joint::spine2] = {0.00, 0.00, 1.19};
  base[joint::left_ankle] = {0.00, 0.11, 0.08};
  base[joint::right_ankle] = {0.00, -0.11, 0.08};
  base[joint::spine3] = {0.00, 0.00, 1.31};
  base[joint::left_foot] = {0.12, 0.11, 0.02};
  base[joint::right_foot] = {0.12, -0.11, 0.02};
  base[joint::neck] = {0.00, 0.00, 1.43};
  base[joint::left_collar] = {0.00, 0.07, 1.38};
  base[joint::right_collar] = {0.00, -0.07, 1.38};
  base[joint::head] = {0.00, 0.00, 1.58};
  base[joint::left_shoulder] = {0.00, 0.20, 1.40};
  base[joint::right_shoulder] = {0.00, -0.20, 1.40};
  base[joint::left_elbow] = {0.00, 0.24, 1.12};
  base[joint::right_elbow] = {0.00, -0.24, 1.12};
  base[joint::left_wrist] = {0.00, 0.26, 0.86};
  base[joint::right_wrist] = {0.00, -0.26, 0.86};
  base[joint::left_hand] = {0.00, 0.27, 0.78};
  base[joint::right_hand] = {0.00, -0.27, 0.78};

  // Per-joint swing gain along the walking direction; zero for the trunk.
  std::array<double, kNumJoints> gain{};
  gain[joint::left_knee] = gain[joint::right_knee] = 0.6;
  gain[joint::left_ankle] = gain[joint::right_ankle] = 1.0;
  gain[joint::left_foot] = gain[joint::right_foot] = 1.0;
  gain[joint::left_elbow] = gain[joint::right_elbow] = 0.5;
  gain[joint::left_wrist] = gain[joint::right_wrist] = 0.8;
  gain[joint::left_hand] = gain[joint::right_hand] = 0.9;
  gain[joint::left_hip] = gain[joint::right_hip] = 0.15;
  gain[joint::left_shoulder] = gain[joint::right_shoulder] = 0.15;

  // Left leg swings with the right arm; encode side by sign.
  std::array<double, kNumJoints> phase{};
  for (int j : {joint::left_knee, joint::left_ankle, joint::left_foot, joint::left_hip,
                joint::right_shoulder, joint::right_elbow, joint::right_wrist,
                joint::right_hand}) {
    phase[j] = 0.0;
  }
  for (int j : {joint::right_knee, joint::right_ankle, joint::right_foot, joint::right_hip,
                joint::left_shoulder, joint::left_elbow, joint::left_wrist,
                joint::left_hand}) {
    phase[j] = M_PI;
  }

  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  const double freq = 0.7 + 0.2 * u01(rng);
  const double phase0 = 2.0 * M_PI * u01(rng);
  const double omega = 2.0 * M_PI * freq;

  // Swing amplitude kept inside the per-joint velocity/acceleration budget.
  double amp = 0.04;
  amp = std::min(amp, 0.9 * a_max / (omega * omega));
  amp = std::min(amp, 0.95 * std::max(0.0, v_max - speed) / omega);

  const Eigen::Vector3d dir(std::cos(heading), std::sin(heading), 0.0);
  const double c = std::cos(heading), s = std::sin(heading);

  JointTrajectory traj;
  traj.rate = rate;
  const int nframes = static_cast<int>(std::floor(duration * rate)) + 1;
  traj.frames.reserve(nframes);
  for (int i = 0; i < nframes; ++i) {
    const double t = i / rate;
    HumanFrame f;
    f.t = t;
    const Eigen::Vector3d root = dir * (speed * t);
    for (int j = 0; j < kNumJoints; ++j) {
      const double swing = gain[j] * amp * std::sin(omega * t + phase0 + phase[j]);
      // Rotate the local pose into the heading, then translate.
      const Eigen::Vector3d& b = base[j];
      const double lx = b.x() + swing;
      Eigen::Vector3d p(c * lx - s * b.y(), s * lx + c * b.y(), b.z());
      f.joints[j] = p + root;
    }
    f.observed_at.fill(t);
    traj.frames.push_back(f);
  }
  return traj;
}

std::shared_ptr<ExternalForecasts> load_forecasts(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open forecast file: " + path);
  std::string line;
  int line_no = 0;
  if (!std::getline(in, line)) throw std::runtime_error("empty forecast file: " + path);
  ++line_no;

  auto out = std::make_shared<ExternalForecasts>();
  struct Key {
    double base;
    int lead;
  };
  std::map<std::pair<long, int>, HumanFrame> partial;
  std::map<long, double> base_times;
  std::map<std::pair<long, int>, int> seen_count;

  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto f = split_csv(line);
    if (f.size() != 7) {
      throw std::runtime_error("forecast parse error at line " + std::to_string(line_no) +
                               ": expected 7 fields");
    }
    const long frame_id = std::lround(parse_double(f[0], line_no));
    const double t = parse_double(f[1], line_no);
    const long jid = std::lround(parse_double(f[2], line_no));
    const int lead = static_cast<int>(std::lround(parse_double(f[6], line_no)));
    if (jid < 0 || jid >= kNumJoints || lead < 1) {
      throw std::runtime_error("forecast parse error at line " + std::to_string(line_no));
    }
    auto& hf = partial[{frame_id, lead}];
    hf.t = t;
    hf.joints[jid] = Eigen::Vector3d(parse_double(f[3], line_no), parse_double(f[4], line_no),
                                     parse_double(f[5], line_no));
    hf.observed_at.fill(t);
    seen_count[{frame_id, lead}]++;
    if (!base_times.count(frame_id)) base_times[frame_id] = t;  // first lead row wins
  }
  for (const auto& [key, count] : seen_count) {
    if (count != kNumJoints) {
      throw std::runtime_error("forecast file: frame " + std::to_string(key.first) +
                               " lead " + std::to_string(key.second) + " has " +
                               std::to_string(count) + " joints");
    }
  }
  std::map<long, std::vector<HumanFrame>> grouped;
  for (const auto& [key, hf] : partial) {
    auto& v = grouped[key.first];
    if (static_cast<int>(v.size()) < key.second) v.resize(key.second);
    v[key.second - 1] = hf;
  }
  for (auto& [fid, frames] : grouped) {
    // Base time = first lead's timestamp minus one lead step when available.
    double base = frames.front().t;
    if (frames.size() > 1) base = frames.front().t - (frames[1].t - frames[0].t);
    out->by_base_time[base] = std::move(frames);
  }
  return out;
}

void save_forecasts(const std::map<double, std::vector<HumanFrame>>& data,
                    const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write forecast file: " + path);
  out << "frame,time,joint,x,y,z,lead_step\n";
  out.precision(12);
  long fid = 0;
  for (const auto& [base, frames] : data) {
    for (size_t k = 0; k < frames.size(); ++k) {
      for (int j = 0; j < kNumJoints; ++j) {
        const auto& p = frames[k].joints[j];
        out << fid << ',' << frames[k].t << ',' << j << ',' << p.x() << ',' << p.y() << ','
            << p.z() << ',' << (k + 1) << '\n';
      }
    }
    ++fid;
  }
}

ForecastResult forecast(const ForecasterConfig& cfg, const std::vector<HumanFrame>& history,
                        int T, double Ts) {
  if (history.empty()) throw std::invalid_argument("forecast: empty history");
  ForecastResult out;
  const HumanFrame& last = history.back();

  auto static_fill = [&]() {
    out.frames.assign(T, last);
    for (int k = 0; k < T; ++k) out.frames[k].t = last.t + (k + 1) * Ts;
  };

  switch (cfg.kind) {
    case ForecasterKind::Static:
      static_fill();
      return out;
    case ForecasterKind::ConstantVelocity: {
      const int window = std::max(2, cfg.history);
      const int avail = static_cast<int>(history.size());
      if (avail < 2) {
        static_fill();
        out.fell_back = true;
        return out;
      }
      const int n = std::min(window, avail);
      const int start = avail - n;
      double tbar = 0.0;
      for (int i = 0; i < n; ++i) tbar += history[start + i].t;
      tbar /= n;
      double denom = 0.0;
      for (int i = 0; i < n; ++i) {
        const double dt = history[start + i].t - tbar;
        denom += dt * dt;
      }
      if (denom <= 0.0) {
        static_fill();
        out.fell_back = true;
        return out;
      }
      std::array<Eigen::Vector3d, kNumJoints> vel{};
      for (int j = 0; j < kNumJoints; ++j) {
        Eigen::Vector3d pbar = Eigen::Vector3d::Zero();
        for (int i = 0; i < n; ++i) pbar += history[start + i].joints[j];
        pbar /= n;
        Eigen::Vector3d num = Eigen::Vector3d::Zero();
        for (int i = 0; i < n; ++i) {
          num += (history[start + i].t - tbar) * (history[start + i].joints[j] - pbar);
        }
        vel[j] = num / denom;
      }
      out.frames.resize(T);
      for (int k = 0; k < T; ++k) {
        HumanFrame f = last;
        f.t = last.t + (k + 1) * Ts;
        for (int j = 0; j < kNumJoints; ++j) {
          f.joints[j] = last.joints[j] + vel[j] * ((k + 1) * Ts);
        }
        out.frames[k] = f;
      }
      return out;
    }
    case ForecasterKind::External: {
      if (cfg.external) {
        // Nearest stored base time within half a control step.
        auto it = cfg.external->by_base_time.lower_bound(last.t - 0.5 * Ts);
        if (it != cfg.external->by_base_time.end() &&
            std::abs(it->first - last.t) <= 0.5 * Ts &&
            static_cast<int>(it->second.size()) >= T) {
          out.frames.assign(it->second.begin(), it->second.begin() + T);
          return out;
        }
      }
      static_fill();
      out.fell_back = true;
      return out;
    }
  }
  static_fill();
  return out;
}

HumanFrame degrade(const HumanFrame& frame, const HumanFrame* previous, double dropout_prob,
                   double latency, std::mt19937_64& rng) {
  if (dropout_prob < 0.0 || dropout_prob > 1.0) {
    throw std::invalid_argument("degrade: dropout_prob outside [0,1]");
  }
  HumanFrame out = frame;
  out.t = frame.t - latency;
  out.observed_at.fill(out.t);
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  for (int j = 0; j < kNumJoints; ++j) {
    if (dropout_prob > 0.0 && u01(rng) < dropout_prob) {
      if (previous != nullptr) {
        out.joints[j] = previous->joints[j];
        out.observed_at[j] = previous->observed_at[j];
      }
    }
  }
  return out;
}

HumanFrame ObservationPipeline::observe(const JointTrajectory& traj, double now) {
  const double t_obs = std::max(now - latency_, traj.t_first());
  HumanFrame raw = sample(traj, t_obs).frame;
  HumanFrame delivered = degrade(raw, has_last_ ? &last_ : nullptr, dropout_, 0.0, rng_);
  last_ = delivered;
  has_last_ = true;
  return delivered;
}

}  // namespace reachmpc

#include "aeroflight/dataset.hpp"

#include "aeroflight/errors.hpp"
#include "aeroflight/rng.hpp"
#include "aeroflight/text.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <sstream>

namespace aeroflight {

namespace {

constexpr double kPi = 3.14159265358979323846;
constexpr double kDeg = kPi / 180.0;

std::uint64_t sub_seed(std::uint64_t seed, std::string_view tag) {
  std::uint64_t h = fnv1a(&seed, sizeof(seed));
  return fnv1a(tag.data(), tag.size(), h);
}

// Random phases and projections of the interference field.
struct InterferenceField {
  static constexpr int kTerms = 3;
  int channels = 0;
  std::vector<Vec3> u;   // channels * kTerms
  std::vector<VecX> v;
  std::vector<double> phase;

  InterferenceField(const RobotModel& model, std::uint64_t seed) {
    channels = 3 * model.n_aero_links();
    Rng rng(sub_seed(seed, "interference"));
    for (int c = 0; c < channels; ++c) {
      for (int k = 0; k < kTerms; ++k) {
        Vec3 dir;
        do {
          dir = Vec3(uniform(rng, -1, 1), uniform(rng, -1, 1), uniform(rng, -1, 1));
        } while (dir.norm() < 0.1 || dir.norm() > 1.0);
        u.push_back(dir.normalized());
        VecX w(model.n_joints());
        for (int j = 0; j < w.size(); ++j) w(j) = uniform(rng, -0.5, 0.5);
        v.push_back(w);
        phase.push_back(uniform(rng, 0.0, 2.0 * kPi));
      }
    }
  }

  double raw(int c, const VecX& s, const Vec3& d) const {
    double acc = 0.0;
    for (int k = 0; k < kTerms; ++k) {
      const int i = c * kTerms + k;
      acc += std::sin((k + 1) * u[i].dot(d) + v[i].dot(s) + phase[i]);
    }
    return acc / kTerms;
  }
};

VecX mirror_config(const RobotModel& model, const VecX& s) {
  const auto& sym = model.symmetry();
  VecX out(s.size());
  for (int j = 0; j < s.size(); ++j) out(sym.joint_mirror[j]) = sym.joint_sign[j] * s(j);
  return out;
}

std::vector<int> aero_position(const RobotModel& model) {
  std::vector<int> pos(model.n_links(), -1);
  for (int a = 0; a < model.n_aero_links(); ++a) pos[model.aero_links()[a]] = a;
  return pos;
}

std::vector<int> aero_mirror(const RobotModel& model) {
  const auto pos = aero_position(model);
  std::vector<int> m(model.n_aero_links());
  for (int a = 0; a < model.n_aero_links(); ++a) {
    const int mirrored = pos[model.symmetry().link_mirror[model.aero_links()[a]]];
    if (mirrored < 0) throw ValidationError("aero link mirrored onto a non-aero link");
    m[a] = mirrored;
  }
  return m;
}

VecX interference_with(const RobotModel& model, const InterferenceField& field, const VecX& s,
                       const Vec3& d) {
  VecX h(field.channels);
  if (!model.symmetry().declared) {
    for (int c = 0; c < field.channels; ++c) h(c) = field.raw(c, s, d);
    return h;
  }
  // Average with the mirrored field so the oracle is mirror-equivariant.
  const auto lm = aero_mirror(model);
  const VecX ms = mirror_config(model, s);
  const Vec3 md(d.x(), -d.y(), d.z());
  for (int c = 0; c < field.channels; ++c) {
    const int a = c / 3;
    const int comp = c % 3;
    const double sign = comp == 1 ? -1.0 : 1.0;
    h(c) = 0.5 * (field.raw(c, s, d) + sign * field.raw(3 * lm[a] + comp, ms, md));
  }
  return h;
}

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

std::uint64_t parse_u64(std::string_view s, int base, int line) {
  std::uint64_t v = 0;
  auto res = std::from_chars(s.data(), s.data() + s.size(), v, base);
  if (s.empty() || res.ec != std::errc() || res.ptr != s.data() + s.size()) {
    throw ParseError("invalid unsigned integer '" + std::string(s) + "'", line);
  }
  return v;
}

int parse_count(const std::string& s, const char* what, int line) {
  const long v = text::parse_long(s, line);
  if (v < 1 || v > 1000000) throw ParseError(std::string(what) + " out of range", line);
  return static_cast<int>(v);
}

}  // namespace

Vec3 direction_from_angles(double pitch_deg, double yaw_deg) {
  const double p = pitch_deg * kDeg;
  const double y = yaw_deg * kDeg;
  return {std::sin(p) * std::cos(y), std::sin(p) * std::sin(y), std::cos(p)};
}

double wrap_degrees(double deg) {
  double r = std::fmod(deg, 360.0);
  if (r <= -180.0) r += 360.0;
  if (r > 180.0) r -= 360.0;
  return r == 0.0 ? 0.0 : r;
}

bool operator==(const AeroSample& a, const AeroSample& b) {
  return a.s.size() == b.s.size() && a.y.size() == b.y.size() && a.s == b.s &&
         a.pitch_deg == b.pitch_deg && a.yaw_deg == b.yaw_deg && a.y == b.y;
}

bool operator==(const AeroDataset& a, const AeroDataset& b) {
  return a.n_joints == b.n_joints && a.n_links == b.n_links && a.seed == b.seed &&
         a.config_hash == b.config_hash && a.augmented == b.augmented && a.samples == b.samples;
}

void OracleConfig::validate() const {
  if (!(eps_int >= 0.0) || !std::isfinite(eps_int)) {
    throw ValidationError("eps_int must be finite and >= 0");
  }
  if (n_configs < 1 || n_pitch < 1 || n_yaw < 1) throw ValidationError("grid counts must be >= 1");
}

std::uint64_t OracleConfig::hash() const {
  std::string canon = format_coeffs(coeffs);
  canon += "eps_int=" + text::format_double(eps_int) + "\n";
  canon += "seed=" + std::to_string(seed) + "\n";
  canon += "grid=" + std::to_string(n_configs) + "," + std::to_string(n_pitch) + "," +
           std::to_string(n_yaw) + "\n";
  return fnv1a(canon.data(), canon.size());
}

OracleConfig load_oracle_config(const std::string& path) {
  const auto kv = text::parse_kv_file(text::read_file(path));
  OracleConfig cfg;
  bool have_coeffs = false;
  for (const auto& [k, v] : kv) {
    if (k == "coeffs") {
      cfg.coeffs = load_coeffs_file(text::resolve(text::dirname(path), v));
      have_coeffs = true;
    } else if (k == "eps_int") {
      cfg.eps_int = text::parse_double(v);
    } else if (k == "seed") {
      cfg.seed = parse_u64(v, 10, 0);
    } else if (k == "n_configs") {
      cfg.n_configs = parse_count(v, "n_configs", 0);
    } else if (k == "n_pitch") {
      cfg.n_pitch = parse_count(v, "n_pitch", 0);
    } else if (k == "n_yaw") {
      cfg.n_yaw = parse_count(v, "n_yaw", 0);
    } else {
      throw ParseError("unknown oracle config key '" + k + "'");
    }
  }
  if (!have_coeffs) throw ParseError("oracle config: missing 'coeffs='");
  cfg.validate();
  return cfg;
}

std::vector<double> pitch_grid(int n_pitch) {
  if (n_pitch == 1) return {0.0};
  std::vector<double> g(n_pitch);
  for (int i = 0; i < n_pitch; ++i) g[i] = 180.0 * i / (n_pitch - 1);
  return g;
}

std::vector<double> yaw_grid(int n_yaw) {
  std::vector<double> g(n_yaw);
  for (int i = 0; i < n_yaw; ++i) g[i] = -180.0 + 360.0 * (i + 1) / n_yaw;
  return g;
}

std::vector<VecX> oracle_configurations(const RobotModel& model, const OracleConfig& cfg) {
  Rng rng(sub_seed(cfg.seed, "configurations"));
  const int n = model.n_joints();
  const auto& sym = model.symmetry();
  std::vector<VecX> configs;
  for (int c = 0; c < cfg.n_configs; ++c) {
    VecX s(n);
    for (int j = 0; j < n; ++j) {
      const double lo = model.lower_limit(j);
      const double hi = model.upper_limit(j);
      const double margin = 0.25 * (hi - lo);
      s(j) = uniform(rng, lo + margin, hi - margin);
    }
    if (sym.declared && c < 3) {
      for (int j = 0; j < n; ++j) {
        const int m = sym.joint_mirror[j];
        if (m == j) {
          if (sym.joint_sign[j] < 0) s(j) = 0.0;
        } else if (m > j) {
          s(m) = std::clamp(sym.joint_sign[j] * s(j), model.lower_limit(m), model.upper_limit(m));
          s(j) = sym.joint_sign[j] * s(m);
        }
      }
    }
    configs.push_back(s);
  }
  return configs;
}

VecX interference(const RobotModel& model, const OracleConfig& cfg, const VecX& s,
                  const Vec3& d) {
  return interference_with(model, InterferenceField(model, cfg.seed), s, d);
}

VecX reference_areas(const RobotModel& model, const AxisymCoeffs& coeffs) {
  VecX a(model.n_aero_links());
  for (int i = 0; i < model.n_aero_links(); ++i) {
    const auto& w = coeffs.at(model.links()[model.aero_links()[i]].name);
    double sum = 0.0;
    for (int deg = 0; deg <= 180; ++deg) sum += std::abs(eval_force_areas(w, deg * kDeg).first);
    a(i) = sum / 181.0;
  }
  return a;
}

VecX oracle_sample(const RobotModel& model, const OracleConfig& cfg, const VecX& s,
                   const Vec3& d) {
  VecX y = predict_force_areas_axisym(model, cfg.coeffs, s, d);
  if (cfg.eps_int > 0.0) {
    const VecX area = reference_areas(model, cfg.coeffs);
    const VecX h = interference(model, cfg, s, d);
    for (int c = 0; c < y.size(); ++c) y(c) += cfg.eps_int * area(c / 3) * h(c);
  }
  return y;
}

AeroDataset oracle_generate(const RobotModel& model, const OracleConfig& cfg) {
  cfg.validate();
  for (int l : model.aero_links()) cfg.coeffs.at(model.links()[l].name);

  AeroDataset ds;
  ds.n_joints = model.n_joints();
  ds.n_links = model.n_aero_links();
  ds.seed = cfg.seed;
  ds.config_hash = cfg.hash();
  const auto configs = oracle_configurations(model, cfg);
  const auto pitches = pitch_grid(cfg.n_pitch);
  const auto yaws = yaw_grid(cfg.n_yaw);
  const VecX area = reference_areas(model, cfg.coeffs);
  const InterferenceField field(model, cfg.seed);

  ds.samples.reserve(configs.size() * pitches.size() * yaws.size());
  for (const auto& s : configs) {
    for (double p : pitches) {
      for (double yaw : yaws) {
        AeroSample smp;
        smp.s = s;
        smp.pitch_deg = p;
        smp.yaw_deg = yaw;
        const Vec3 d = smp.direction();
        smp.y = predict_force_areas_axisym(model, cfg.coeffs, s, d);
        if (cfg.eps_int > 0.0) {
          const VecX h = interference_with(model, field, s, d);
          for (int c = 0; c < smp.y.size(); ++c) smp.y(c) += cfg.eps_int * area(c / 3) * h(c);
        }
        ds.samples.push_back(std::move(smp));
      }
    }
  }
  return ds;
}

AeroSample mirror_sample(const AeroSample& x, const RobotModel& model) {
  if (!model.symmetry().declared) {
    throw ValidationError("model declares no left/right symmetry");
  }
  if (x.s.size() != model.n_joints() || x.y.size() != 3 * model.n_aero_links()) {
    throw DimensionError("sample dimensions do not match the model");
  }
  const auto lm = aero_mirror(model);
  AeroSample m;
  m.s = mirror_config(model, x.s);
  m.pitch_deg = x.pitch_deg;
  m.yaw_deg = wrap_degrees(-x.yaw_deg);
  m.y.resize(x.y.size());
  for (int a = 0; a < model.n_aero_links(); ++a) {
    const Vec3 f = x.y.segment<3>(3 * a);
    m.y.segment<3>(3 * lm[a]) = Vec3(f.x(), -f.y(), f.z());
  }
  return m;
}

AeroDataset mirror_augment(const AeroDataset& ds, const RobotModel& model) {
  if (!model.symmetry().declared) {
    throw ValidationError("model declares no left/right symmetry");
  }
  AeroDataset out = ds;
  out.augmented = true;
  out.samples.reserve(2 * ds.size());
  for (const auto& smp : ds.samples) out.samples.push_back(mirror_sample(smp, model));
  return out;
}

std::pair<AeroDataset, AeroDataset> split(const AeroDataset& ds, double ratio,
                                          std::uint64_t seed) {
  if (ds.samples.empty()) throw ValidationError("cannot split an empty dataset");
  if (!(ratio > 0.0 && ratio < 1.0)) throw ValidationError("split ratio must be in (0, 1)");
  const std::size_t n = ds.size();
  const auto n_train = static_cast<std::size_t>(std::llround(ratio * static_cast<double>(n)));
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  Rng rng(seed);
  shuffle_in_place(idx, rng);
  std::sort(idx.begin(), idx.begin() + n_train);
  std::sort(idx.begin() + n_train, idx.end());

  AeroDataset train = ds, val = ds;
  train.samples.clear();
  val.samples.clear();
  for (std::size_t i = 0; i < n; ++i) {
    (i < n_train ? train : val).samples.push_back(ds.samples[idx[i]]);
  }
  return {std::move(train), std::move(val)};
}

MatX dataset_inputs(const AeroDataset& ds) {
  MatX x(ds.size(), ds.input_dim());
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const auto& smp = ds.samples[i];
    x.row(i).head<3>() = smp.direction().transpose();
    x.row(i).tail(ds.n_joints) = smp.s.transpose();
  }
  return x;
}

MatX dataset_outputs(const AeroDataset& ds) {
  MatX y(ds.size(), ds.output_dim());
  for (std::size_t i = 0; i < ds.size(); ++i) y.row(i) = ds.samples[i].y.transpose();
  return y;
}

double relative_error(const MatX& pred, const MatX& target) {
  if (pred.rows() != target.rows() || pred.cols() != target.cols()) {
    throw DimensionError("relative_error: shape mismatch");
  }
  const double den = target.squaredNorm();
  if (den == 0.0) return (pred - target).squaredNorm() == 0.0 ? 0.0 : INFINITY;
  return std::sqrt((pred - target).squaredNorm() / den);
}

std::string format_dataset(const AeroDataset& ds) {
  std::string out = "# aero-dataset v1 n_joints=" + std::to_string(ds.n_joints) +
                    " n_links=" + std::to_string(ds.n_links) + " seed=" + std::to_string(ds.seed) +
                    " hash=" + hex64(ds.config_hash) + " augmented=" + (ds.augmented ? "1" : "0") +
                    "\n";
  out += "#";
  for (int j = 0; j < ds.n_joints; ++j) out += (j ? ",s" : " s") + std::to_string(j);
  out += ds.n_joints ? ",pitch_deg,yaw_deg" : " pitch_deg,yaw_deg";
  for (int l = 0; l < ds.n_links; ++l) {
    for (const char* c : {"x", "y", "z"}) out += ",y" + std::to_string(l) + "_" + c;
  }
  out += "\n";
  for (const auto& smp : ds.samples) {
    std::string row;
    for (int j = 0; j < smp.s.size(); ++j) row += text::format_double(smp.s(j)) + ",";
    row += text::format_double(smp.pitch_deg) + "," + text::format_double(smp.yaw_deg);
    for (int c = 0; c < smp.y.size(); ++c) row += "," + text::format_double(smp.y(c));
    out += row + "\n";
  }
  return out;
}

AeroDataset parse_dataset(std::string_view contents) {
  std::istringstream in{std::string(contents)};
  std::string raw;
  AeroDataset ds;
  if (!std::getline(in, raw)) throw ParseError("malformed header: empty file", 1);
  const auto head = text::split_ws(raw);
  if (head.size() < 3 || head[0] != "#" || head[1] != "aero-dataset" || head[2] != "v1") {
    throw ParseError("malformed header: expected '# aero-dataset v1 ...'", 1);
  }
  const auto kv = text::parse_kv_tokens(head, 3, 1);
  for (const char* key : {"n_joints", "n_links", "seed"}) {
    if (!kv.count(key)) throw ParseError(std::string("malformed header: missing ") + key, 1);
  }
  for (const auto& [k, v] : kv) {
    if (k == "n_joints") ds.n_joints = static_cast<int>(text::parse_long(v, 1));
    else if (k == "n_links") ds.n_links = static_cast<int>(text::parse_long(v, 1));
    else if (k == "seed") ds.seed = parse_u64(v, 10, 1);
    else if (k == "hash") ds.config_hash = parse_u64(v, 16, 1);
    else if (k == "augmented") {
      if (v != "0" && v != "1") throw ParseError("malformed header: augmented must be 0 or 1", 1);
      ds.augmented = v == "1";
    } else {
      throw ParseError("malformed header: unknown key '" + k + "'", 1);
    }
  }
  if (ds.n_joints < 0 || ds.n_links < 1) throw ParseError("malformed header: bad dimensions", 1);

  const std::size_t cols = static_cast<std::size_t>(ds.n_joints + 2 + 3 * ds.n_links);
  int line_no = 1;
  while (std::getline(in, raw)) {
    ++line_no;
    const auto line = text::trim(raw);
    if (line.empty() || line.front() == '#') continue;
    const auto fields = text::split(line, ',');
    if (fields.size() != cols) {
      throw ParseError("column count mismatch: expected " + std::to_string(cols) + ", got " +
                           std::to_string(fields.size()),
                       line_no);
    }
    std::vector<double> v(cols);
    for (std::size_t i = 0; i < cols; ++i) {
      v[i] = text::parse_double(fields[i], line_no);
      if (!std::isfinite(v[i])) throw ParseError("non-finite value", line_no);
    }
    AeroSample smp;
    smp.s = Eigen::Map<const VecX>(v.data(), ds.n_joints);
    smp.pitch_deg = v[ds.n_joints];
    smp.yaw_deg = v[ds.n_joints + 1];
    smp.y = Eigen::Map<const VecX>(v.data() + ds.n_joints + 2, 3 * ds.n_links);
    ds.samples.push_back(std::move(smp));
  }
  return ds;
}

void write_dataset(const std::string& path, const AeroDataset& ds) {
  text::write_file(path, format_dataset(ds));
}

AeroDataset read_dataset(const std::string& path) { return parse_dataset(text::read_file(path)); }

}  // namespace aeroflight

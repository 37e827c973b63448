#include "aeroflight/axisym.hpp"

#include "aeroflight/dataset.hpp"
#include "aeroflight/errors.hpp"
#include "aeroflight/text.hpp"

#include <Eigen/QR>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <set>
#include <sstream>

namespace aeroflight {

namespace {

constexpr double kPi = 3.14159265358979323846;
constexpr double kSinGuard = 1e-9;

double soft_threshold(double x, double t) {
  if (x > t) return x - t;
  if (x < -t) return x + t;
  return 0.0;
}

}  // namespace

const AxisymWeights* AxisymCoeffs::find(std::string_view link) const {
  for (const auto& l : links) {
    if (l.link == link) return &l.w;
  }
  return nullptr;
}

const AxisymWeights& AxisymCoeffs::at(std::string_view link) const {
  const auto* w = find(link);
  if (!w) throw ValidationError("no aerodynamic coefficients for link '" + std::string(link) + "'");
  return *w;
}

void AxisymCoeffs::set(const std::string& link, const AxisymWeights& w) {
  for (auto& l : links) {
    if (l.link == link) {
      l.w = w;
      return;
    }
  }
  links.push_back({link, w});
}

double angle_of_attack(const Vec3& v_a, const Vec3& k) {
  if (std::abs(k.norm() - 1.0) > 1e-9) throw ValidationError("link axis is not a unit vector");
  const double speed = v_a.norm();
  if (speed < 1e-12) return 0.0;
  // atan2 keeps full precision near 0 and pi where acos loses digits.
  return std::atan2(v_a.cross(k).norm(), v_a.dot(k));
}

std::array<double, 5> drag_basis(double alpha) {
  const double c = std::cos(alpha);
  const double s = std::sin(alpha);
  return {1.0, c, s * s, s * s * s, c * c * c};
}

double normal_basis(double alpha) {
  const double s = std::sin(alpha);
  return s * s * std::cos(alpha);
}

std::pair<double, double> eval_force_areas(const AxisymWeights& w, double alpha) {
  const auto b = drag_basis(alpha);
  double cda = 0.0;
  for (int i = 0; i < 5; ++i) cda += w[i] * b[i];
  return {cda, w[5] * normal_basis(alpha)};
}

Vec3 force_area_vector(const AxisymWeights& w, const Vec3& d, const Vec3& k) {
  const double alpha = angle_of_attack(d, k);
  const auto [cda, cna] = eval_force_areas(w, alpha);
  Vec3 y = -cda * d;
  const Vec3 n = d.cross(k).cross(d);
  const double sin_a = std::sin(alpha);
  if (sin_a >= kSinGuard) y += cna * n / sin_a;
  return y;
}

Vec3 eval_link_force(const AxisymWeights& w, const AeroFactors& f, const Vec3& v_a, const Vec3& k) {
  const double alpha = angle_of_attack(v_a, k);
  const double speed = v_a.norm();
  if (speed == 0.0) return Vec3::Zero();
  const auto [cda, cna] = eval_force_areas(w, alpha);
  Vec3 force = -f.k_a() * speed * cda * v_a;
  const double sin_a = std::sin(alpha);
  if (sin_a >= kSinGuard) force += f.k_a() * cna * v_a.cross(k).cross(v_a) / sin_a;
  return force;
}

VecX predict_force_areas_axisym(const RobotModel& model, const AxisymCoeffs& coeffs,
                                const VecX& s, const Vec3& d) {
  JointState st = JointState::zero(model);
  if (s.size() != model.n_joints()) throw DimensionError("configuration length mismatch");
  st.s = s;
  const auto kin = forward_kinematics(model, st);
  VecX y(3 * model.n_aero_links());
  for (int a = 0; a < model.n_aero_links(); ++a) {
    const int l = model.aero_links()[a];
    const Vec3 k = kin.rotation[l] * model.links()[l].axis;
    y.segment<3>(3 * a) = force_area_vector(coeffs.at(model.links()[l].name), d, k);
  }
  return y;
}

std::vector<Vec3> predict_link_forces_axisym(const RobotModel& model, const Kinematics& kin,
                                             const LinkVelocities& vel, const Vec3& v_w,
                                             const AxisymCoeffs& coeffs,
                                             const AeroFactors& factors) {
  std::vector<Vec3> forces;
  forces.reserve(model.n_aero_links());
  for (int l : model.aero_links()) {
    const Vec3 v_a = vel.v_com[l] - v_w;
    const Vec3 k = kin.rotation[l] * model.links()[l].axis;
    forces.push_back(eval_link_force(coeffs.at(model.links()[l].name), factors, v_a, k));
  }
  return forces;
}

std::vector<Vec3> predict_link_forces_axisym(const RobotModel& model, const JointState& state,
                                             const Vec3& v_w, const AxisymCoeffs& coeffs,
                                             const AeroFactors& factors) {
  validate_state(model, state);
  const auto kin = forward_kinematics(model, state);
  const auto vel = link_velocities(model, state, kin);
  return predict_link_forces_axisym(model, kin, vel, v_w, coeffs, factors);
}

VecX total_wrench(const RobotModel& model, const Kinematics& kin, const JointState& state,
                  const std::vector<Vec3>& forces) {
  if (static_cast<int>(forces.size()) != model.n_aero_links()) {
    throw DimensionError("expected " + std::to_string(model.n_aero_links()) +
                         " link forces, got " + std::to_string(forces.size()));
  }
  VecX f = VecX::Zero(model.n_velocity());
  for (int a = 0; a < model.n_aero_links(); ++a) {
    const int l = model.aero_links()[a];
    f += point_force_to_generalized(model, kin, state, l, kin.link_com[l], forces[a]);
  }
  return f;
}

VecX total_wrench(const RobotModel& model, const JointState& state,
                  const std::vector<Vec3>& forces) {
  validate_state(model, state);
  return total_wrench(model, forward_kinematics(model, state), state, forces);
}

// ---------------------------------------------------------------------------
// Fitting

namespace {

// Coordinate descent on the Gram form: min 1/2 w'Gw - c'w + lambda |w|_1.
// Each coordinate update is O(p), independent of the sample count.
VecX lasso_gram(const MatX& g, const VecX& c, double lambda, double tol, int max_sweeps,
                int* sweeps_used) {
  const int p = static_cast<int>(c.size());
  VecX w = VecX::Zero(p);
  VecX gw = VecX::Zero(p);  // G w
  int sweep = 0;
  for (; sweep < max_sweeps; ++sweep) {
    double max_delta = 0.0;
    for (int j = 0; j < p; ++j) {
      if (g(j, j) <= 0.0) continue;
      const double rho = c(j) - gw(j) + g(j, j) * w(j);
      const double wn = soft_threshold(rho, lambda) / g(j, j);
      const double delta = wn - w(j);
      if (delta != 0.0) {
        gw += g.col(j) * delta;
        w(j) = wn;
        max_delta = std::max(max_delta, std::abs(delta));
      }
    }
    if (max_delta < tol) {
      ++sweep;
      break;
    }
  }
  if (sweeps_used) *sweeps_used = sweep;
  return w;
}

// Least squares restricted to x = Q2 z where Q2 spans the null space of C.
VecX constrained_lsq(const MatX& a, const VecX& b, const MatX& c) {
  if (c.rows() == 0) return a.completeOrthogonalDecomposition().solve(b);
  Eigen::ColPivHouseholderQR<MatX> qr(c.transpose());
  const int r = static_cast<int>(qr.rank());
  const MatX q = qr.householderQ() * MatX::Identity(c.cols(), c.cols());
  const MatX q2 = q.rightCols(c.cols() - r);
  if (q2.cols() == 0) return VecX::Zero(a.cols());
  const VecX z = (a * q2).completeOrthogonalDecomposition().solve(b);
  return q2 * z;
}

struct DragDesign {
  MatX basis;  // n x 5, column 0 is the intercept
  VecX y;
};

struct DragFit {
  std::array<double, 5> w{};
  std::array<bool, 5> support{};
  bool rank_deficient = false;
  int constraints = 0;
};

// Standardized Gram data of the four non-constant drag columns.
struct Standardized {
  Eigen::Matrix4d g = Eigen::Matrix4d::Zero();
  Eigen::Vector4d c = Eigen::Vector4d::Zero();
  Eigen::Vector4d scale = Eigen::Vector4d::Zero();
  double lambda_max = 0.0;
};

Standardized standardize(const MatX& basis, const VecX& y) {
  Standardized st;
  const double n = static_cast<double>(basis.rows());
  const double y_mean = y.mean();
  Eigen::Vector4d mean;
  for (int j = 0; j < 4; ++j) mean(j) = basis.col(j + 1).mean();
  MatX xc(basis.rows(), 4);
  for (int j = 0; j < 4; ++j) {
    xc.col(j) = basis.col(j + 1).array() - mean(j);
    const double sd = std::sqrt(xc.col(j).squaredNorm() / n);
    st.scale(j) = sd > 1e-12 ? sd : 0.0;
    if (st.scale(j) > 0.0) xc.col(j) /= sd;
    else xc.col(j).setZero();
  }
  const VecX yc = y.array() - y_mean;
  st.g = xc.transpose() * xc / n;
  st.c = xc.transpose() * yc / n;
  st.lambda_max = st.c.cwiseAbs().maxCoeff();
  return st;
}

DragFit fit_drag(const MatX& basis, const VecX& y, double lambda, const FitOptions& opt) {
  DragFit fit;
  const auto st = standardize(basis, y);
  const VecX ws = lasso_gram(st.g, st.c, lambda, opt.tol, opt.max_sweeps, nullptr);

  std::vector<int> cols{0};
  fit.support[0] = true;
  for (int j = 0; j < 4; ++j) {
    if (ws(j) != 0.0 && st.scale(j) > 0.0) {
      cols.push_back(j + 1);
      fit.support[j + 1] = true;
    }
  }

  auto solve_on = [&](const std::vector<int>& use, const MatX& constraints) {
    MatX a(basis.rows(), use.size());
    MatX c(constraints.rows(), use.size());
    for (std::size_t k = 0; k < use.size(); ++k) {
      a.col(k) = basis.col(use[k]);
      c.col(k) = constraints.col(use[k]);
    }
    const VecX x = constrained_lsq(a, y, c);
    std::array<double, 5> w{};
    for (std::size_t k = 0; k < use.size(); ++k) w[use[k]] = x(k);
    return w;
  };

  {
    MatX a(basis.rows(), cols.size());
    for (std::size_t k = 0; k < cols.size(); ++k) a.col(k) = basis.col(cols[k]);
    Eigen::ColPivHouseholderQR<MatX> qr(a);
    if (qr.rank() < static_cast<Eigen::Index>(cols.size())) {
      fit.rank_deficient = true;
      cols = {0, 1, 2, 3, 4};
      fit.support.fill(true);
    }
  }

  MatX constraints(0, 5);
  fit.w = solve_on(cols, constraints);
  if (opt.enforce_positive_drag) {
    // Pin the most negative grid point to zero until the curve is nonnegative.
    for (int iter = 0; iter < 5; ++iter) {
      double worst = 0.0;
      int worst_deg = -1;
      for (int deg = 0; deg <= 180; ++deg) {
        const auto b = drag_basis(deg * kPi / 180.0);
        double v = 0.0;
        for (int i = 0; i < 5; ++i) v += fit.w[i] * b[i];
        if (v < worst) {
          worst = v;
          worst_deg = deg;
        }
      }
      const double scale = std::max(1e-300, y.cwiseAbs().maxCoeff());
      if (worst_deg < 0 || worst > -1e-12 * scale) break;
      const auto b = drag_basis(worst_deg * kPi / 180.0);
      constraints.conservativeResize(constraints.rows() + 1, 5);
      for (int i = 0; i < 5; ++i) constraints(constraints.rows() - 1, i) = b[i];
      fit.w = solve_on(cols, constraints);
      ++fit.constraints;
    }
  }
  return fit;
}

double fit_normal(const VecX& x, const VecX& y, double lambda) {
  const double n = static_cast<double>(x.size());
  const double xx = x.squaredNorm() / n;
  if (xx <= 0.0) return 0.0;
  const double lasso = soft_threshold(x.dot(y) / n, lambda) / xx;
  if (lasso == 0.0) return 0.0;
  return x.dot(y) / (n * xx);
}

template <typename FitFn, typename ErrFn>
double cross_validate(int n, int folds, const std::vector<double>& grid, FitFn fit, ErrFn err) {
  double best_lambda = grid.front();
  double best_err = std::numeric_limits<double>::infinity();
  for (double lambda : grid) {
    double total = 0.0;
    for (int f = 0; f < folds; ++f) {
      std::vector<int> train, test;
      for (int i = 0; i < n; ++i) (i % folds == f ? test : train).push_back(i);
      if (test.empty() || train.empty()) continue;
      total += err(fit(train, lambda), test);
    }
    if (total < best_err) {
      best_err = total;
      best_lambda = lambda;
    }
  }
  return best_lambda;
}

std::vector<double> lambda_grid(double lambda_max, const FitOptions& opt) {
  std::vector<double> grid;
  if (!(lambda_max > 0.0)) return {0.0};
  const int n = std::max(1, opt.n_lambda);
  for (int k = 0; k < n; ++k) {
    const double t = n == 1 ? 0.0 : static_cast<double>(k) / (n - 1);
    grid.push_back(lambda_max * std::pow(opt.lambda_ratio, t));
  }
  return grid;
}

}  // namespace

VecX lasso_cd(const MatX& x, const VecX& y, double lambda, double tol, int max_sweeps,
              int* sweeps_used) {
  if (x.rows() != y.size()) throw DimensionError("lasso: design/target row mismatch");
  if (lambda < 0.0) throw ValidationError("lasso: lambda must be nonnegative");
  const double n = static_cast<double>(x.rows());
  const MatX g = x.transpose() * x / n;
  const VecX c = x.transpose() * y / n;
  return lasso_gram(g, c, lambda, tol, max_sweeps, sweeps_used);
}

AxisymWeights fit_link(const LinkFitData& data, const FitOptions& opt, LinkFitReport* report) {
  const int n = static_cast<int>(data.alpha.size());
  if (static_cast<int>(data.cda.size()) != n || static_cast<int>(data.cna.size()) != n) {
    throw DimensionError("fit: alpha/target length mismatch");
  }
  std::set<double> distinct;
  for (double a : data.alpha) distinct.insert(std::round(a * 1e12) / 1e12);
  if (n < 6 || distinct.size() < 5) {
    throw ValidationError("fit: need at least 6 samples with 5 distinct angles of attack");
  }
  if (opt.lambda && *opt.lambda < 0.0) throw ValidationError("fit: lambda must be nonnegative");

  MatX basis(n, 5);
  VecX y(n);
  for (int i = 0; i < n; ++i) {
    const auto b = drag_basis(data.alpha[i]);
    for (int j = 0; j < 5; ++j) basis(i, j) = b[j];
    y(i) = data.cda[i];
  }
  std::vector<int> nidx;
  for (int i = 0; i < n; ++i) {
    if (std::isfinite(data.cna[i])) nidx.push_back(i);
  }
  VecX xn(nidx.size()), yn(nidx.size());
  for (std::size_t k = 0; k < nidx.size(); ++k) {
    xn(k) = normal_basis(data.alpha[nidx[k]]);
    yn(k) = data.cna[nidx[k]];
  }

  auto rows = [](const MatX& m, const std::vector<int>& idx) {
    MatX out(idx.size(), m.cols());
    for (std::size_t k = 0; k < idx.size(); ++k) out.row(k) = m.row(idx[k]);
    return out;
  };
  auto elems = [](const VecX& v, const std::vector<int>& idx) {
    VecX out(idx.size());
    for (std::size_t k = 0; k < idx.size(); ++k) out(k) = v(idx[k]);
    return out;
  };

  double lambda_d = 0.0;
  double lambda_n = 0.0;
  if (opt.lambda) {
    lambda_d = lambda_n = *opt.lambda;
  } else {
    const auto grid_d = lambda_grid(standardize(basis, y).lambda_max, opt);
    lambda_d = cross_validate(
        n, opt.folds, grid_d,
        [&](const std::vector<int>& tr, double lam) {
          return fit_drag(rows(basis, tr), elems(y, tr), lam, opt).w;
        },
        [&](const std::array<double, 5>& w, const std::vector<int>& te) {
          double e = 0.0;
          for (int i : te) {
            double p = 0.0;
            for (int j = 0; j < 5; ++j) p += w[j] * basis(i, j);
            e += (p - y(i)) * (p - y(i));
          }
          return e;
        });
    const int nn = static_cast<int>(nidx.size());
    const auto grid_n = lambda_grid(nn > 0 ? std::abs(xn.dot(yn)) / nn : 0.0, opt);
    lambda_n = nn == 0 ? 0.0
                       : cross_validate(
                             nn, opt.folds, grid_n,
                             [&](const std::vector<int>& tr, double lam) {
                               return fit_normal(elems(xn, tr), elems(yn, tr), lam);
                             },
                             [&](double w, const std::vector<int>& te) {
                               double e = 0.0;
                               for (int i : te) e += (w * xn(i) - yn(i)) * (w * xn(i) - yn(i));
                               return e;
                             });
  }

  const auto drag = fit_drag(basis, y, lambda_d, opt);
  AxisymWeights w{};
  for (int j = 0; j < 5; ++j) w[j] = drag.w[j];
  w[5] = nidx.empty() ? 0.0 : fit_normal(xn, yn, lambda_n);

  if (report) {
    report->lambda_drag = lambda_d;
    report->lambda_normal = lambda_n;
    for (int j = 0; j < 5; ++j) report->support[j] = drag.support[j];
    report->support[5] = w[5] != 0.0;
    report->rank_deficient = drag.rank_deficient;
    report->positivity_constraints = drag.constraints;
  }
  return w;
}

std::vector<LinkFitData> project_dataset(const RobotModel& model, const AeroDataset& ds) {
  if (ds.n_joints != model.n_joints() || ds.n_links != model.n_aero_links()) {
    throw DimensionError("dataset dimensions do not match the model");
  }
  std::vector<LinkFitData> out(model.n_aero_links());
  JointState st = JointState::zero(model);
  Kinematics kin;
  bool have_kin = false;
  for (const auto& smp : ds.samples) {
    if (!have_kin || smp.s != st.s) {
      st.s = smp.s;
      kin = forward_kinematics(model, st);
      have_kin = true;
    }
    const Vec3 d = smp.direction();
    for (int a = 0; a < model.n_aero_links(); ++a) {
      const int l = model.aero_links()[a];
      const Vec3 k = kin.rotation[l] * model.links()[l].axis;
      const Vec3 y = smp.y.segment<3>(3 * a);
      const double alpha = angle_of_attack(d, k);
      const Vec3 n = d.cross(k).cross(d);
      const double sn = n.norm();
      out[a].alpha.push_back(alpha);
      out[a].cda.push_back(-y.dot(d));
      out[a].cna.push_back(sn >= kSinGuard ? y.dot(n) / sn
                                           : std::numeric_limits<double>::quiet_NaN());
    }
  }
  return out;
}

AxisymCoeffs fit_coefficients(const RobotModel& model, const AeroDataset& ds,
                              const FitOptions& opt, std::vector<LinkFitReport>* reports) {
  const auto data = project_dataset(model, ds);
  AxisymCoeffs c;
  if (reports) reports->assign(data.size(), {});
  for (std::size_t a = 0; a < data.size(); ++a) {
    const auto& name = model.links()[model.aero_links()[a]].name;
    c.set(name, fit_link(data[a], opt, reports ? &(*reports)[a] : nullptr));
  }
  return c;
}

MatX predict_dataset_axisym(const RobotModel& model, const AxisymCoeffs& coeffs,
                            const AeroDataset& ds) {
  MatX out(ds.size(), ds.output_dim());
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const auto& x = ds.samples[i];
    out.row(static_cast<Eigen::Index>(i)) =
        predict_force_areas_axisym(model, coeffs, x.s, x.direction()).transpose();
  }
  return out;
}

AxisymCoeffs parse_coeffs(std::string_view contents) {
  AxisymCoeffs c;
  std::istringstream in{std::string(contents)};
  std::string raw;
  int line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    const auto tokens = text::split_ws(std::string_view(raw).substr(0, raw.find('#')));
    if (tokens.empty()) continue;
    if (tokens[0] != "coeffs" || tokens.size() < 2) {
      throw ParseError("expected 'coeffs <link> w0=.. w5=..'", line_no);
    }
    const auto kv = text::parse_kv_tokens(tokens, 2, line_no);
    AxisymWeights w{};
    for (int i = 0; i < kAxisymWeights; ++i) {
      const auto key = "w" + std::to_string(i);
      auto it = kv.find(key);
      if (it == kv.end()) throw ParseError("missing '" + key + "='", line_no);
      w[i] = text::parse_double(it->second, line_no);
      if (!std::isfinite(w[i])) throw ParseError("non-finite weight", line_no);
    }
    if (kv.size() != kAxisymWeights) throw ParseError("unexpected attribute", line_no);
    if (c.find(tokens[1])) throw ParseError("duplicate link '" + tokens[1] + "'", line_no);
    c.set(tokens[1], w);
  }
  return c;
}

std::string format_coeffs(const AxisymCoeffs& c) {
  std::string out;
  for (const auto& l : c.links) {
    out += "coeffs " + l.link;
    for (int i = 0; i < kAxisymWeights; ++i) {
      out += " w" + std::to_string(i) + "=" + text::format_double(l.w[i]);
    }
    out += "\n";
  }
  return out;
}

AxisymCoeffs load_coeffs_file(const std::string& path) { return parse_coeffs(text::read_file(path)); }

void save_coeffs_file(const std::string& path, const AxisymCoeffs& c) {
  text::write_file(path, format_coeffs(c));
}

}  // namespace aeroflight

#include "splat4d/scaffold.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <numeric>

#include "splat4d/errors.hpp"

namespace splat4d {

namespace {
constexpr double kTimeTol = 1e-9;

// Gradient flip through quaternion conjugation.
Vec4 conj_adjoint(const Vec4& g) { return {g[0], -g[1], -g[2], -g[3]}; }

// Map gradients on a node pose (quaternion coefficients + translation) to a
// gradient on the left-perturbation twist exp(delta) * T.
Vec6 twist_grad(const Quat& q, const Vec3& tau, const Vec4& gq, const Vec3& gtau) {
  Vec6 g;
  for (int k = 0; k < 3; ++k) {
    Vec3 e = Vec3::Zero();
    e[k] = 1.0;
    const Vec4 dq = quat_mul(Quat::pure(e), q).coeffs() * 0.5;
    g[k] = gq.dot(dq) + gtau.dot(e.cross(tau));
  }
  g.tail<3>() = gtau;
  return g;
}

struct BracketResult {
  int lo = 0, hi = 0;
  double frac = 0.0;  // 0 = lo sample, 1 = hi sample
};

BracketResult bracket_time(const std::vector<double>& ts, double t) {
  if (ts.empty()) throw Error("scaffold has no timestamps");
  BracketResult r;
  if (t <= ts.front() + kTimeTol) {
    r.lo = r.hi = 0;
    return r;
  }
  if (t >= ts.back() - kTimeTol) {
    r.lo = r.hi = static_cast<int>(ts.size()) - 1;
    return r;
  }
  const auto it = std::upper_bound(ts.begin(), ts.end(), t);
  r.hi = static_cast<int>(it - ts.begin());
  r.lo = r.hi - 1;
  if (std::abs(t - ts[r.lo]) < kTimeTol) {
    r.hi = r.lo;
    return r;
  }
  if (std::abs(t - ts[r.hi]) < kTimeTol) {
    r.lo = r.hi;
    return r;
  }
  r.frac = (t - ts[r.lo]) / (ts[r.hi] - ts[r.lo]);
  return r;
}

}  // namespace

int Scaffold::exact_time_index(double t) const {
  const BracketResult r = bracket_time(timestamps, t);
  if (r.lo == r.hi) {
    if (std::abs(timestamps[r.lo] - t) < kTimeTol) return r.lo;
  }
  throw Error("time is not on the scaffold grid");
}

SE3Pose Scaffold::node_pose(int node, double t) const {
  const ScaffoldNode& n = nodes.at(node);
  const BracketResult r = bracket_time(timestamps, t);
  if (r.lo == r.hi) return n.poses[r.lo];
  return n.poses[r.lo] * interpolate_pose(n.poses[r.lo], n.poses[r.hi], r.frac);
}

double Scaffold::node_opacity_weight(int node, double t) const {
  const ScaffoldNode& n = nodes.at(node);
  const BracketResult r = bracket_time(timestamps, t);
  if (r.lo == r.hi) return n.opacity_weights[r.lo];
  return (1.0 - r.frac) * n.opacity_weights[r.lo] + r.frac * n.opacity_weights[r.hi];
}

std::vector<std::vector<int>> Scaffold::node_neighbors(int k, int time_index) const {
  const int n = node_count();
  std::vector<std::vector<int>> out(n);
  std::vector<std::pair<double, int>> dist;
  for (int i = 0; i < n; ++i) {
    dist.clear();
    const Vec3 pi = nodes[i].poses.at(time_index).translation;
    for (int j = 0; j < n; ++j) {
      if (j == i) continue;
      dist.emplace_back((nodes[j].poses[time_index].translation - pi).squaredNorm(), j);
    }
    const int take = std::min<int>(k, static_cast<int>(dist.size()));
    std::partial_sort(dist.begin(), dist.begin() + take, dist.end());
    for (int j = 0; j < take; ++j) out[i].push_back(dist[j].second);
  }
  return out;
}

GaussianBinding bind_gaussian(const Scaffold& s, const Vec3& center_world,
                              double ref_time, int knn) {
  if (s.empty()) throw EmptyScaffold("bind_gaussian: scaffold has no nodes");
  if (knn < 1) knn = 1;

  std::vector<std::pair<double, int>> dist;
  dist.reserve(s.nodes.size());
  for (int i = 0; i < s.node_count(); ++i) {
    const Vec3 p = s.node_pose(i, ref_time).translation;
    dist.emplace_back((p - center_world).squaredNorm(), i);
  }
  const int take = std::min<int>(knn, static_cast<int>(dist.size()));
  std::partial_sort(dist.begin(), dist.begin() + take, dist.end());

  GaussianBinding b;
  b.ref_time = ref_time;
  double wsum = 0.0;
  for (int j = 0; j < take; ++j) {
    const int idx = dist[j].second;
    const double r = s.nodes[idx].radius;
    const double w = std::exp(-dist[j].first / (2.0 * r * r));
    b.nodes.push_back(idx);
    b.weights.push_back(w);
    wsum += w;
  }
  if (!(wsum > 0.0)) b.weights[0] = 1.0;  // far splat: fall back to the nearest node
  return b;
}

namespace {

struct BlendState {
  std::vector<Quat> q_t, q_r;
  std::vector<Vec3> tau_t, tau_r;
  std::vector<DualQuat> delta;
  std::vector<double> ws;  // normalized weight * hemisphere sign
  Quat b_r{0, 0, 0, 0}, b_d{0, 0, 0, 0};
};

// Shared forward pass; on the backward path poses are the exact grid samples.
BlendState blend_forward(const Scaffold& s, const GaussianBinding& b, double t) {
  const int k = static_cast<int>(b.nodes.size());
  if (k == 0) throw EmptyBlend("deform: binding has no nodes");
  double wsum = 0.0;
  for (double w : b.weights) wsum += w;
  if (!(wsum > 0.0)) throw EmptyBlend("deform: binding weights are all zero");

  BlendState st;
  st.q_t.resize(k);
  st.q_r.resize(k);
  st.tau_t.resize(k);
  st.tau_r.resize(k);
  st.delta.resize(k);
  st.ws.resize(k);
  for (int i = 0; i < k; ++i) {
    const SE3Pose Pt = s.node_pose(b.nodes[i], t);
    const SE3Pose Pr = s.node_pose(b.nodes[i], b.ref_time);
    st.q_t[i] = Pt.rotation;
    st.tau_t[i] = Pt.translation;
    st.q_r[i] = Pr.rotation;
    st.tau_r[i] = Pr.translation;
    st.delta[i] = dq_mul(DualQuat::from_pose(Pt), DualQuat::from_pose(Pr).conjugate());
  }
  for (int i = 0; i < k; ++i) {
    const double sgn = (st.delta[i].real.dot(st.delta[0].real) < 0.0) ? -1.0 : 1.0;
    st.ws[i] = sgn * b.weights[i] / wsum;
    st.b_r = st.b_r + st.delta[i].real.scaled(st.ws[i]);
    st.b_d = st.b_d + st.delta[i].dual.scaled(st.ws[i]);
  }
  return st;
}

}  // namespace

SE3Pose deform_transform(const Scaffold& s, const GaussianBinding& b, double t) {
  const BlendState st = blend_forward(s, b, t);
  return DualQuat{st.b_r, st.b_d}.to_pose();
}

double opacity_weight(const Scaffold& s, const GaussianBinding& b, double t) {
  double acc = 0.0;
  for (size_t i = 0; i < b.nodes.size(); ++i) {
    acc += b.weights[i] * s.node_opacity_weight(b.nodes[i], t);
  }
  return acc;
}

DeformGrad deform_backward(const Scaffold& s, const GaussianBinding& b, double t,
                           const Vec4& d_rotation, const Vec3& d_translation) {
  // Grid-only: gradients flow to specific pose samples.
  s.exact_time_index(t);
  s.exact_time_index(b.ref_time);

  const BlendState st = blend_forward(s, b, t);
  const int k = static_cast<int>(b.nodes.size());

  const double n = st.b_r.norm();
  const Quat rh = st.b_r.scaled(1.0 / n);
  const Quat dt = st.b_d.scaled(1.0 / n);
  const double rd = rh.dot(dt);
  const Quat dh = dt + rh.scaled(-rd);

  // Output: q_T = rh, t_T = 2 * vec(dh * conj(rh)).
  const Vec4 gu(0.0, 2.0 * d_translation.x(), 2.0 * d_translation.y(),
                2.0 * d_translation.z());
  Vec4 g_dh = quat_right_matrix(rh.conjugate()).transpose() * gu;
  Vec4 g_rh = d_rotation + conj_adjoint(quat_left_matrix(dh).transpose() * gu);

  // dh = dt - (rh . dt) rh  over 4-vectors.
  const Vec4 rhc = rh.coeffs(), dtc = dt.coeffs();
  const Vec4 g_dt = g_dh - rhc * rhc.dot(g_dh);
  g_rh += -rd * g_dh - dtc * rhc.dot(g_dh);

  // dt = b_d / n, rh = b_r / n, n = |b_r|.
  const Vec4 g_bd = g_dt / n;
  const double g_n = -st.b_d.coeffs().dot(g_dt) / (n * n);
  const Vec4 g_br = normalize_backward(st.b_r, g_rh) + rhc * g_n;

  DeformGrad out;
  out.node_at_t.assign(k, Vec6::Zero());
  out.node_at_ref.assign(k, Vec6::Zero());
  for (int i = 0; i < k; ++i) {
    const Vec4 gR = g_br * st.ws[i];
    const Vec4 gD = g_bd * st.ws[i];

    const Quat& qt = st.q_t[i];
    const Quat& qr = st.q_r[i];
    const Quat c_r = qr.conjugate();
    const Quat p_r = quat_mul(Quat::pure(st.tau_r[i]), qr).scaled(0.5);
    const Quat c_d = p_r.conjugate();
    const Quat d_t = quat_mul(Quat::pure(st.tau_t[i]), qt).scaled(0.5);

    // delta.real = qt * c_r ; delta.dual = qt * c_d + d_t * c_r
    Vec4 g_qt = quat_right_matrix(c_r).transpose() * gR;
    Vec4 g_cr = quat_left_matrix(qt).transpose() * gR;
    g_qt += quat_right_matrix(c_d).transpose() * gD;
    const Vec4 g_cd = quat_left_matrix(qt).transpose() * gD;
    const Vec4 g_dt_i = quat_right_matrix(c_r).transpose() * gD;
    g_cr += quat_left_matrix(d_t).transpose() * gD;

    Vec4 g_qr = conj_adjoint(g_cr);
    const Vec4 g_pr = conj_adjoint(g_cd);

    // d_t = 0.5 * pure(tau_t) * qt
    const Vec4 g_pure_t = quat_right_matrix(qt).transpose() * g_dt_i * 0.5;
    const Vec3 g_tau_t = g_pure_t.tail<3>();
    g_qt += quat_left_matrix(Quat::pure(st.tau_t[i])).transpose() * g_dt_i * 0.5;

    // p_r = 0.5 * pure(tau_r) * qr
    const Vec4 g_pure_r = quat_right_matrix(qr).transpose() * g_pr * 0.5;
    const Vec3 g_tau_r = g_pure_r.tail<3>();
    g_qr += quat_left_matrix(Quat::pure(st.tau_r[i])).transpose() * g_pr * 0.5;

    out.node_at_t[i] = twist_grad(qt, st.tau_t[i], g_qt, g_tau_t);
    out.node_at_ref[i] = twist_grad(qr, st.tau_r[i], g_qr, g_tau_r);
  }
  return out;
}

Scaffold init_scaffold_from_points(const std::vector<double>& timestamps,
                                   const std::vector<std::vector<Vec3>>& positions,
                                   const std::vector<std::vector<uint8_t>>& visible,
                                   const ScaffoldBuildParams& params) {
  const size_t T = timestamps.size();
  if (T == 0) throw Error("init_scaffold_from_points: no timestamps");
  if (positions.size() != visible.size())
    throw ShapeMismatch("init_scaffold_from_points: positions/visible mismatch");

  // Fill gaps so every candidate track has a position at every sample.
  std::vector<std::vector<Vec3>> filled;
  filled.reserve(positions.size());
  for (size_t m = 0; m < positions.size(); ++m) {
    if (positions[m].size() != T || visible[m].size() != T)
      throw ShapeMismatch("init_scaffold_from_points: track length mismatch");
    std::vector<int> vis;
    for (size_t i = 0; i < T; ++i)
      if (visible[m][i]) vis.push_back(static_cast<int>(i));
    if (vis.empty()) continue;

    std::vector<Vec3> track(T);
    for (size_t i = 0; i < T; ++i) {
      const int ii = static_cast<int>(i);
      const auto nx = std::lower_bound(vis.begin(), vis.end(), ii);
      if (nx != vis.end() && *nx == ii) {
        track[i] = positions[m][i];
      } else if (nx == vis.begin()) {
        track[i] = positions[m][vis.front()];  // before first sighting
      } else if (nx == vis.end()) {
        track[i] = positions[m][vis.back()];  // after last sighting
      } else {
        const int a = *(nx - 1), b = *nx;
        const double f = (timestamps[i] - timestamps[a]) / (timestamps[b] - timestamps[a]);
        track[i] = (1.0 - f) * positions[m][a] + f * positions[m][b];
      }
    }
    filled.push_back(std::move(track));
  }
  if (filled.empty()) throw NoTracks("init_scaffold_from_points: no visible tracks");

  const int M = static_cast<int>(filled.size());
  const int ref = std::clamp(params.reference_index, 0, static_cast<int>(T) - 1);
  const int want = std::min(params.node_count, M);

  // Farthest-point sampling at the reference sample, seeded at the point
  // nearest the centroid so the result is deterministic.
  Vec3 centroid = Vec3::Zero();
  for (const auto& tr : filled) centroid += tr[ref];
  centroid /= M;
  int seed = 0;
  double best = std::numeric_limits<double>::max();
  for (int m = 0; m < M; ++m) {
    const double d = (filled[m][ref] - centroid).squaredNorm();
    if (d < best) {
      best = d;
      seed = m;
    }
  }
  std::vector<int> chosen{seed};
  std::vector<double> d2(M, std::numeric_limits<double>::max());
  while (static_cast<int>(chosen.size()) < want) {
    const Vec3 last = filled[chosen.back()][ref];
    int next = -1;
    double far = -1.0;
    for (int m = 0; m < M; ++m) {
      d2[m] = std::min(d2[m], (filled[m][ref] - last).squaredNorm());
      if (d2[m] > far) {
        far = d2[m];
        next = m;
      }
    }
    if (next < 0 || far <= 0.0) break;  // all remaining tracks coincide
    chosen.push_back(next);
  }

  Scaffold s;
  s.timestamps = timestamps;
  for (int idx : chosen) {
    ScaffoldNode node;
    node.poses.reserve(T);
    for (size_t i = 0; i < T; ++i) {
      SE3Pose P;
      P.translation = filled[idx][i];
      node.poses.push_back(P);
    }
    node.opacity_weights.assign(T, params.opacity_weight_init);
    s.nodes.push_back(std::move(node));
  }

  // Radii from inter-node spacing at the reference sample.
  const int nn = std::min<int>(params.radius_neighbor, s.node_count() - 1);
  for (int i = 0; i < s.node_count(); ++i) {
    double r = params.min_radius;
    if (nn >= 1) {
      std::vector<double> d;
      const Vec3 pi = s.nodes[i].poses[ref].translation;
      for (int j = 0; j < s.node_count(); ++j) {
        if (j != i) d.push_back((s.nodes[j].poses[ref].translation - pi).norm());
      }
      std::nth_element(d.begin(), d.begin() + (nn - 1), d.end());
      r = std::max(params.min_radius, params.radius_scale * d[nn - 1]);
    }
    s.nodes[i].radius = r;
  }
  return s;
}

void save_scaffold(const std::string& path, const Scaffold& s) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open for writing: " + path);
  out << std::setprecision(17);
  out << "splat4d-scaffold 1\n";
  out << "samples " << s.timestamps.size() << "\n";
  for (size_t i = 0; i < s.timestamps.size(); ++i)
    out << s.timestamps[i] << (i + 1 < s.timestamps.size() ? ' ' : '\n');
  if (s.timestamps.empty()) out << "\n";
  out << "nodes " << s.nodes.size() << "\n";
  for (const ScaffoldNode& n : s.nodes) {
    out << "radius " << n.radius << "\n";
    for (const SE3Pose& p : n.poses) {
      out << p.rotation.w << ' ' << p.rotation.x << ' ' << p.rotation.y << ' '
          << p.rotation.z << ' ' << p.translation.x() << ' ' << p.translation.y()
          << ' ' << p.translation.z() << "\n";
    }
    for (size_t i = 0; i < n.opacity_weights.size(); ++i)
      out << n.opacity_weights[i] << (i + 1 < n.opacity_weights.size() ? ' ' : '\n');
    if (n.opacity_weights.empty()) out << "\n";
  }
  if (!out) throw IoError("write failed: " + path);
}

Scaffold load_scaffold(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open for reading: " + path);
  std::string magic;
  int version = 0;
  in >> magic >> version;
  if (magic != "splat4d-scaffold" || version != 1)
    throw IoError(path + ": not a scaffold file");

  std::string word;
  size_t T = 0, N = 0;
  in >> word >> T;
  if (word != "samples") throw IoError(path + ": expected samples count");
  Scaffold s;
  s.timestamps.resize(T);
  for (size_t i = 0; i < T; ++i) in >> s.timestamps[i];
  in >> word >> N;
  if (word != "nodes") throw IoError(path + ": expected node count");
  s.nodes.resize(N);
  for (ScaffoldNode& n : s.nodes) {
    in >> word >> n.radius;
    if (word != "radius") throw IoError(path + ": expected node radius");
    n.poses.resize(T);
    for (SE3Pose& p : n.poses) {
      double qw, qx, qy, qz, tx, ty, tz;
      in >> qw >> qx >> qy >> qz >> tx >> ty >> tz;
      p.rotation = Quat(qw, qx, qy, qz);
      p.translation = Vec3(tx, ty, tz);
    }
    n.opacity_weights.resize(T);
    for (double& w : n.opacity_weights) in >> w;
  }
  if (!in) throw IoError(path + ": truncated scaffold data");
  return s;
}

}  // namespace splat4d

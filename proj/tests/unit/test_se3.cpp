#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <numbers>
#include <random>

#include "splat4d/se3.hpp"
#include "support/oracles.hpp"

using namespace splat4d;

namespace {
constexpr double kPi = std::numbers::pi;

Quat random_unit_quat(std::mt19937& rng)
{
    std::normal_distribution<double> n(0.0, 1.0);
    Quat q(n(rng), n(rng), n(rng), n(rng));
    return q.normalized();
}
}  // namespace

TEST_CASE("exp of zero twist is the identity")
{
    SE3Pose T = se3_exp(Twist{});
    CHECK(T.rotation.w == doctest::Approx(1.0));
    CHECK(T.translation.norm() == doctest::Approx(0.0));
}

TEST_CASE("exp of a pure translation keeps the vector")
{
    Twist xi(Vec3::Zero(), Vec3(0.3, -1.2, 4.0));
    SE3Pose T = se3_exp(xi);
    CHECK((T.translation - xi.translational).norm() < 1e-15);
    CHECK(T.rotation_angle() == doctest::Approx(0.0));
}

TEST_CASE("exp matches the matrix exponential")
{
    // The specific quarter-turn case plus randomized twists.
    Twist quarter(Vec3(kPi / 2.0, 0.0, 0.0), Vec3(1.0, 0.0, 0.0));
    std::mt19937 rng(7);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    std::vector<Twist> cases{quarter};
    for (int i = 0; i < 200; ++i) {
        Twist xi(Vec3(u(rng), u(rng), u(rng)) * 2.0, Vec3(u(rng), u(rng), u(rng)) * 5.0);
        cases.push_back(xi);
    }
    for (const Twist& xi : cases) {
        Eigen::Matrix4d want = oracles::matrix_exp_se3(xi);
        Eigen::Matrix4d got = oracles::pose_matrix(se3_exp(xi));
        CHECK((want - got).cwiseAbs().maxCoeff() < 1e-8);
    }
}

TEST_CASE("log inverts exp for rotations up to 3 radians")
{
    std::mt19937 rng(13);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    std::uniform_real_distribution<double> ang(0.0, 3.0);
    for (int i = 0; i < 1000; ++i) {
        Vec3 axis(u(rng), u(rng), u(rng));
        if (axis.norm() < 1e-9) continue;
        axis.normalize();
        Twist xi(axis * ang(rng), Vec3(u(rng), u(rng), u(rng)) * 4.0);
        Twist back = se3_log(se3_exp(xi));
        CHECK((back.coeffs() - xi.coeffs()).cwiseAbs().maxCoeff() < 1e-8);
    }
}

TEST_CASE("log of the round-trip pose composition is consistent")
{
    std::mt19937 rng(29);
    for (int i = 0; i < 200; ++i) {
        SE3Pose A = oracles::random_pose(rng, 2.5, 3.0);
        SE3Pose B = oracles::random_pose(rng, 2.5, 3.0);
        SE3Pose C = A * B;
        // exp(log(C)) reproduces C.
        SE3Pose back = se3_exp(se3_log(C));
        CHECK((oracles::pose_matrix(back) - oracles::pose_matrix(C)).cwiseAbs().maxCoeff() <
              1e-9);
        // A^{-1} A = identity.
        SE3Pose I = A.inverse() * A;
        CHECK(I.rotation_angle() < 1e-12);
        CHECK(I.translation.norm() < 1e-12);
    }
}

TEST_CASE("log throws near a half-turn rotation")
{
    SE3Pose T;
    T.rotation = quat_from_axis_angle(Vec3(kPi, 0.0, 0.0));
    CHECK_THROWS_AS(se3_log(T), NearAngularSingularity);
    // Just under the guard band is fine.
    T.rotation = quat_from_axis_angle(Vec3(kPi - 2e-3, 0.0, 0.0));
    CHECK_NOTHROW(se3_log(T));
}

TEST_CASE("quaternion axis-angle round trip")
{
    std::mt19937 rng(41);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    std::uniform_real_distribution<double> ang(1e-8, kPi - 1e-6);
    for (int i = 0; i < 500; ++i) {
        Vec3 axis(u(rng), u(rng), u(rng));
        if (axis.norm() < 1e-9) continue;
        axis.normalize();
        Vec3 aa = axis * ang(rng);
        Vec3 back = quat_to_axis_angle(quat_from_axis_angle(aa));
        CHECK((back - aa).norm() < 1e-9);
    }
}

TEST_CASE("quaternion multiplication matches its matrix forms")
{
    std::mt19937 rng(43);
    for (int i = 0; i < 100; ++i) {
        Quat a = random_unit_quat(rng);
        Quat b = random_unit_quat(rng);
        Vec4 ab = quat_mul(a, b).coeffs();
        CHECK((quat_left_matrix(a) * b.coeffs() - ab).norm() < 1e-14);
        CHECK((quat_right_matrix(b) * a.coeffs() - ab).norm() < 1e-14);
        // Rotation composition agrees with matrix product.
        Mat3 R = quat_mul(a, b).to_matrix();
        CHECK((a.to_matrix() * b.to_matrix() - R).cwiseAbs().maxCoeff() < 1e-13);
    }
}

TEST_CASE("blend of a single transform returns it unchanged")
{
    std::mt19937 rng(17);
    for (int i = 0; i < 50; ++i) {
        SE3Pose T = oracles::random_pose(rng, 3.0, 5.0);
        SE3Pose out = dqb({2.7}, {DualQuat::from_pose(T)});
        CHECK((oracles::pose_matrix(out) - oracles::pose_matrix(T)).cwiseAbs().maxCoeff() <
              1e-9);
    }
}

TEST_CASE("blend of duplicated transforms returns the transform")
{
    std::mt19937 rng(19);
    for (int i = 0; i < 50; ++i) {
        SE3Pose T = oracles::random_pose(rng, 3.0, 5.0);
        DualQuat dq = DualQuat::from_pose(T);
        // Flip the sign of one operand; blending must be immune to the double cover.
        DualQuat flipped(-dq.real, -dq.dual);
        SE3Pose out = dqb({0.25, 0.5, 0.25}, {dq, flipped, dq});
        CHECK((oracles::pose_matrix(out) - oracles::pose_matrix(T)).cwiseAbs().maxCoeff() <
              1e-9);
    }
}

TEST_CASE("blend is invariant to weight scaling and permutation")
{
    std::mt19937 rng(23);
    for (int i = 0; i < 30; ++i) {
        std::vector<DualQuat> dqs;
        std::vector<double> w;
        std::uniform_real_distribution<double> uw(0.05, 1.0);
        for (int k = 0; k < 4; ++k) {
            dqs.push_back(DualQuat::from_pose(oracles::random_pose(rng, 1.0, 2.0)));
            w.push_back(uw(rng));
        }
        SE3Pose base = dqb(w, dqs);

        std::vector<double> scaled = w;
        for (double& x : scaled) x *= 37.5;
        SE3Pose s = dqb(scaled, dqs);
        CHECK((oracles::pose_matrix(s) - oracles::pose_matrix(base)).cwiseAbs().maxCoeff() <
              1e-12);

        std::vector<double> wp = {w[2], w[0], w[3], w[1]};
        std::vector<DualQuat> dp = {dqs[2], dqs[0], dqs[3], dqs[1]};
        SE3Pose p = dqb(wp, dp);
        CHECK((oracles::pose_matrix(p) - oracles::pose_matrix(base)).cwiseAbs().maxCoeff() <
              1e-9);
    }
}

TEST_CASE("equal-weight blend of identity and a translation halves the offset")
{
    SE3Pose T;
    T.translation = Vec3(2.0, 0.0, 0.0);
    SE3Pose mid = dqb({0.5, 0.5}, {DualQuat::from_pose(SE3Pose::identity()),
                                   DualQuat::from_pose(T)});
    CHECK((mid.translation - Vec3(1.0, 0.0, 0.0)).norm() < 1e-12);
    CHECK(mid.rotation_angle() < 1e-12);
}

TEST_CASE("blend rejects empty and all-zero weights")
{
    CHECK_THROWS_AS(dqb({}, {}), EmptyBlend);
    CHECK_THROWS_AS(dqb({0.0, 0.0},
                        {DualQuat::from_pose(SE3Pose::identity()),
                         DualQuat::from_pose(SE3Pose::identity())}),
                    EmptyBlend);
}

TEST_CASE("pose interpolation hits both endpoints and the geodesic midpoint")
{
    std::mt19937 rng(31);
    for (int i = 0; i < 50; ++i) {
        SE3Pose A = oracles::random_pose(rng, 1.2, 3.0);
        SE3Pose B = oracles::random_pose(rng, 1.2, 3.0);
        SE3Pose at0 = interpolate_pose(A, B, 0.0);
        SE3Pose at1 = interpolate_pose(A, B, 1.0);
        CHECK((oracles::pose_matrix(at0) - oracles::pose_matrix(SE3Pose::identity()))
                  .cwiseAbs()
                  .maxCoeff() < 1e-12);
        CHECK((oracles::pose_matrix(at1) - oracles::pose_matrix(A.inverse() * B))
                  .cwiseAbs()
                  .maxCoeff() < 1e-9);
        // Midpoint squared equals the full relative motion.
        SE3Pose half = interpolate_pose(A, B, 0.5);
        CHECK((oracles::pose_matrix(half * half) - oracles::pose_matrix(A.inverse() * B))
                  .cwiseAbs()
                  .maxCoeff() < 1e-9);
    }

    SE3Pose A = SE3Pose::identity();
    SE3Pose B;
    B.translation = Vec3(2.0, 0.0, 0.0);
    SE3Pose half = interpolate_pose(A, B, 0.5);
    CHECK((half.translation - Vec3(1.0, 0.0, 0.0)).norm() < 1e-12);
}

TEST_CASE("rotation jacobian against finite differences")
{
    std::mt19937 rng(53);
    std::normal_distribution<double> n(0.0, 1.0);
    for (int i = 0; i < 20; ++i) {
        Quat q = random_unit_quat(rng);
        Vec3 v(n(rng), n(rng), n(rng));
        Eigen::Matrix<double, 3, 4> J = rotate_jacobian_wrt_quat(q, v);
        for (int k = 0; k < 4; ++k) {
            for (int r = 0; r < 3; ++r) {
                double fd = oracles::central_diff(
                    [&](double x) {
                        Vec4 c = q.coeffs();
                        c[k] = x;
                        // Evaluate without renormalizing: the jacobian is of the
                        // raw quadratic form.
                        Quat qq = Quat::from_coeffs(c);
                        return qq.rotate(v)[r];
                    },
                    q.coeffs()[k], 1e-6);
                CHECK(std::abs(J(r, k) - fd) < 1e-6);
            }
        }
    }
}

TEST_CASE("rotation-matrix jacobian contraction against finite differences")
{
    std::mt19937 rng(59);
    std::normal_distribution<double> n(0.0, 1.0);
    for (int i = 0; i < 20; ++i) {
        Quat q = random_unit_quat(rng);
        Mat3 G;
        for (int r = 0; r < 3; ++r)
            for (int c = 0; c < 3; ++c) G(r, c) = n(rng);
        Vec4 g = matrix_jacobian_contract(q, G);
        for (int k = 0; k < 4; ++k) {
            double fd = oracles::central_diff(
                [&](double x) {
                    Vec4 c = q.coeffs();
                    c[k] = x;
                    Mat3 R = Quat::from_coeffs(c).to_matrix();
                    return (G.array() * R.array()).sum();
                },
                q.coeffs()[k], 1e-6);
            CHECK(std::abs(g[k] - fd) < 1e-6);
        }
    }
}

TEST_CASE("normalization backward against finite differences")
{
    std::mt19937 rng(61);
    std::normal_distribution<double> n(0.0, 1.0);
    for (int i = 0; i < 20; ++i) {
        Quat raw(n(rng), n(rng), n(rng), n(rng));
        if (raw.norm() < 0.1) continue;
        Vec4 up(n(rng), n(rng), n(rng), n(rng));  // incoming adjoint
        Vec4 g = normalize_backward(raw, up);
        for (int k = 0; k < 4; ++k) {
            double fd = oracles::central_diff(
                [&](double x) {
                    Vec4 c = raw.coeffs();
                    c[k] = x;
                    return up.dot(Quat::from_coeffs(c).normalized().coeffs());
                },
                raw.coeffs()[k], 1e-6);
            CHECK(std::abs(g[k] - fd) < 1e-6);
        }
    }
}

TEST_CASE("adjoint maps twists across conjugation")
{
    std::mt19937 rng(67);
    std::uniform_real_distribution<double> u(-0.3, 0.3);
    for (int i = 0; i < 50; ++i) {
        SE3Pose T = oracles::random_pose(rng, 2.0, 3.0);
        Twist xi(Vec3(u(rng), u(rng), u(rng)), Vec3(u(rng), u(rng), u(rng)));
        SE3Pose lhs = se3_exp(Twist::from_coeffs(se3_adjoint(T) * xi.coeffs()));
        SE3Pose rhs = T * se3_exp(xi) * T.inverse();
        CHECK((oracles::pose_matrix(lhs) - oracles::pose_matrix(rhs)).cwiseAbs().maxCoeff() <
              1e-9);
    }
}

TEST_CASE("left jacobian linearizes the exponential")
{
    // exp(xi + d) ~= exp(J_l(xi) d) exp(xi) for small d.
    std::mt19937 rng(71);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    for (int i = 0; i < 50; ++i) {
        Twist xi(Vec3(u(rng), u(rng), u(rng)), Vec3(u(rng), u(rng), u(rng)) * 2.0);
        Mat6 Jl = se3_left_jacobian(xi);
        const double eps = 1e-6;
        for (int k = 0; k < 6; ++k) {
            Vec6 d = Vec6::Zero();
            d[k] = eps;
            SE3Pose lhs = se3_exp(Twist::from_coeffs(xi.coeffs() + d));
            SE3Pose rhs = se3_exp(Twist::from_coeffs(Jl * d)) * se3_exp(xi);
            CHECK((oracles::pose_matrix(lhs) - oracles::pose_matrix(rhs))
                      .cwiseAbs()
                      .maxCoeff() < 1e-10);
        }
        Mat6 Ji = se3_left_jacobian_inverse(xi);
        CHECK((Jl * Ji - Mat6::Identity()).cwiseAbs().maxCoeff() < 1e-9);
    }
}

TEST_CASE("left jacobian is smooth through the small-angle branch")
{
    for (double scale : {1e-2, 1e-3, 1e-4 + 1e-8, 1e-4 - 1e-8, 1e-5}) {
        Twist xi(Vec3(0.6, -0.3, 0.7).normalized() * scale, Vec3(0.2, 0.1, -0.4));
        Mat6 Jl = se3_left_jacobian(xi);
        Mat6 Ji = se3_left_jacobian_inverse(xi);
        CHECK((Jl * Ji - Mat6::Identity()).cwiseAbs().maxCoeff() < 1e-9);
        const double eps = 1e-6;
        for (int k : {0, 3}) {
            Vec6 d = Vec6::Zero();
            d[k] = eps;
            SE3Pose lhs = se3_exp(Twist::from_coeffs(xi.coeffs() + d));
            SE3Pose rhs = se3_exp(Twist::from_coeffs(Jl * d)) * se3_exp(xi);
            CHECK((oracles::pose_matrix(lhs) - oracles::pose_matrix(rhs))
                      .cwiseAbs()
                      .maxCoeff() < 1e-10);
        }
    }
}

TEST_CASE("dual quaternion round trip and composition")
{
    std::mt19937 rng(73);
    for (int i = 0; i < 100; ++i) {
        SE3Pose A = oracles::random_pose(rng, 3.0, 5.0);
        SE3Pose B = oracles::random_pose(rng, 3.0, 5.0);
        SE3Pose back = DualQuat::from_pose(A).to_pose();
        CHECK((oracles::pose_matrix(back) - oracles::pose_matrix(A)).cwiseAbs().maxCoeff() <
              1e-12);
        SE3Pose prod = dq_mul(DualQuat::from_pose(A), DualQuat::from_pose(B)).to_pose();
        CHECK((oracles::pose_matrix(prod) - oracles::pose_matrix(A * B))
                  .cwiseAbs()
                  .maxCoeff() < 1e-12);
    }
}

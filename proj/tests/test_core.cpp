// Copyright Contributors to the segs project
// SPDX-License-Identifier: Apache-2.0

#include "oracles.hpp"
#include "segs/core.hpp"

#include <Eigen/Eigenvalues>
#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>

using namespace segs;

namespace {

Gaussian unit_gaussian() {
    Gaussian g;
    g.mu = Vec3::Zero();
    g.rot = Vec4(1, 0, 0, 0);
    g.log_scale = Vec3::Zero();
    g.opacity_logit = 0.0;
    return g;
}

}  // namespace

TEST(Covariance3d, IdentityRotationUnitScale) {
    EXPECT_TRUE(covariance3d(unit_gaussian()).isApprox(Mat3::Identity(), 1e-15));
}

TEST(Covariance3d, DiagonalScaling) {
    Gaussian g = unit_gaussian();
    g.log_scale = Vec3(std::log(2.0), 0, 0);
    const Mat3 expect = Vec3(4, 1, 1).asDiagonal();
    EXPECT_LT((covariance3d(g) - expect).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Covariance3d, QuarterTurnAboutZSwapsAxes) {
    Gaussian g = unit_gaussian();
    g.log_scale = Vec3(std::log(2.0), 0, 0);
    const double h = std::numbers::pi / 4.0;
    g.rot = Vec4(std::cos(h), 0, 0, std::sin(h));
    Mat3 r;
    r << 0, -1, 0, 1, 0, 0, 0, 0, 1;
    const Mat3 expect = r * Vec3(4, 1, 1).asDiagonal() * r.transpose();
    EXPECT_LT((covariance3d(g) - expect).cwiseAbs().maxCoeff(), 1e-12);
    EXPECT_NEAR(covariance3d(g)(1, 1), 4.0, 1e-12);
    EXPECT_NEAR(covariance3d(g)(0, 0), 1.0, 1e-12);
}

TEST(Covariance3d, MatchesReferenceAndIsPsd) {
    std::mt19937_64 rng(3);
    for (int t = 0; t < 500; ++t) {
        const Gaussian g = oracle::random_gaussian(rng, 1.0, 1e-3, 10.0);
        const Mat3 c = covariance3d(g);
        EXPECT_LT((c - oracle::cov3(g)).cwiseAbs().maxCoeff(), 1e-9 * c.cwiseAbs().maxCoeff());
        const Eigen::SelfAdjointEigenSolver<Mat3> es(c);
        EXPECT_GE(es.eigenvalues().minCoeff(), -1e-12 * es.eigenvalues().maxCoeff());
    }
}

TEST(Covariance3d, QuaternionSignFlipIsExact) {
    std::mt19937_64 rng(4);
    for (int t = 0; t < 200; ++t) {
        Gaussian g = oracle::random_gaussian(rng);
        const Mat3 a = covariance3d(g);
        g.rot = -g.rot;
        EXPECT_TRUE(a == covariance3d(g));
    }
}

TEST(Covariance3d, NonFiniteThrows) {
    Gaussian g = unit_gaussian();
    g.log_scale.x() = std::nan("");
    EXPECT_THROW(covariance3d(g), InvalidParameterError);
}

TEST(ValidateCloud, FreshCloudIsClean) {
    std::mt19937_64 rng(5);
    EXPECT_TRUE(validate_cloud(oracle::random_cloud(rng, 50)).empty());
}

TEST(ValidateCloud, ReportsQuaternionNorm) {
    std::mt19937_64 rng(6);
    GaussianCloud c = oracle::random_cloud(rng, 10);
    c[3].rot *= 1.1;
    const auto v = validate_cloud(c);
    ASSERT_EQ(v.size(), 1u);
    EXPECT_EQ(v[0].index, 3u);
    EXPECT_EQ(v[0].field, "rot");
}

TEST(ValidateCloud, ReportsNanPosition) {
    std::mt19937_64 rng(7);
    GaussianCloud c = oracle::random_cloud(rng, 10);
    c[7].mu.y() = std::nan("");
    const auto v = validate_cloud(c);
    ASSERT_EQ(v.size(), 1u);
    EXPECT_EQ(v[0].index, 7u);
    EXPECT_EQ(v[0].field, "mu");
}

TEST(ValidateCloud, EmptyCloudIsInvalid) { EXPECT_FALSE(validate_cloud(GaussianCloud{}).empty()); }

TEST(Params, FlattenRoundTrip) {
    std::mt19937_64 rng(8);
    const Gaussian g = oracle::random_gaussian(rng);
    Gaussian h;
    unflatten_params(flatten_params(g), h);
    EXPECT_EQ(flatten_params(h), flatten_params(g));
}

TEST(Camera, LookAtIsProperRotation) {
    const CameraPose c = oracle::look_from(Vec3(1, -2, 3), 32, 32);
    EXPECT_TRUE(c.violations().empty());
    const CameraPose d = CameraPose::from_center(
        CameraPose::look_at(Vec3(1, -2, 3), Vec3::Zero(), Vec3(0, -1, 0)), Vec3(1, -2, 3), 10, 10, 4,
        4, 8, 8);
    EXPECT_TRUE(d.violations().empty());
    // The world origin projects onto the optical axis.
    EXPECT_NEAR((d.rotation * (-d.center)).head<2>().norm(), 0.0, 1e-12);
}

TEST(Camera, QuatRotationRoundTrip) {
    std::mt19937_64 rng(9);
    std::normal_distribution<double> n;
    for (int t = 0; t < 200; ++t) {
        const Vec4 q = Vec4(n(rng), n(rng), n(rng), n(rng)).normalized();
        const Mat3 r = quat_to_rotation(q);
        EXPECT_LT((r - oracle::quat_rot(q)).cwiseAbs().maxCoeff(), 1e-12);
        EXPECT_LT((quat_to_rotation(rotation_to_quat(r)) - r).cwiseAbs().maxCoeff(), 1e-12);
    }
}

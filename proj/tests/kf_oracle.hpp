#pragma once

#include <random>

#include <Eigen/Dense>

#include "rvf/tracker.hpp"

namespace oracle {

inline rvf::StateMatrix random_spd(std::mt19937_64& rng) {
  std::normal_distribution<double> d(0.0, 0.5);
  rvf::StateMatrix a;
  for (int i = 0; i < rvf::kStateDim; ++i)
    for (int j = 0; j < rvf::kStateDim; ++j) a(i, j) = d(rng);
  return a * a.transpose() + 0.1 * rvf::StateMatrix::Identity();
}

// Standard linear Kalman filter for the constant-velocity model.
inline void kf_predict(rvf::StateVector& x, rvf::StateMatrix& p, double dt, const rvf::UkfConfig& cfg) {
  rvf::StateMatrix f = rvf::StateMatrix::Identity();
  f(0, 7) = dt;
  f(1, 8) = dt;
  x = f * x;
  p = f * p * f.transpose() + rvf::StateMatrix(cfg.process_noise.asDiagonal()) * dt;
}

inline void kf_update(rvf::StateVector& x, rvf::StateMatrix& p, const rvf::MeasVector& z, const rvf::MeasMatrix& r) {
  Eigen::Matrix<double, rvf::kMeasDim, rvf::kStateDim> h = Eigen::Matrix<double, rvf::kMeasDim, rvf::kStateDim>::Zero();
  h.leftCols<rvf::kMeasDim>().setIdentity();
  const rvf::MeasMatrix s = h * p * h.transpose() + r;
  const Eigen::Matrix<double, rvf::kStateDim, rvf::kMeasDim> k = p * h.transpose() * s.inverse();
  x = x + k * (z - h * x);
  p = p - k * s * k.transpose();
}

inline rvf::BBox3D to_box(const rvf::MeasVector& z) { return {z(0), z(1), z(2), z(4), z(5), z(6), z(3)}; }

}  // namespace oracle

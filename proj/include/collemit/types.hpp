#pragma once

#include <complex>
#include <cstdint>

#include <Eigen/Dense>

namespace collemit {

using cdouble = std::complex<double>;
using Vec3 = Eigen::Vector3d;
using CVec3 = Eigen::Vector3cd;
using CVector = Eigen::VectorXcd;
using CMatrix = Eigen::MatrixXcd;
using RVector = Eigen::VectorXd;

inline constexpr double kPi = 3.14159265358979323846;
inline constexpr cdouble kI{0.0, 1.0};

}  // namespace collemit

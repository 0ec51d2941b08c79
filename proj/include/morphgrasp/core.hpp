#pragma once

// Small fixed-size linear algebra, rigid transforms and shared error types.

#include <array>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <stdexcept>
#include <string>
#include <vector>

namespace morphgrasp {

// ---------------------------------------------------------------------------
// Errors

enum class ErrorCode {
  XmlSyntax,
  MissingLink,
  CycleDetected,
  MultipleRoots,
  UnsupportedJointKind,
  BranchAtNonWrist,
  NoBranches,
  TooManyJointsInGroup,
  OverrideConflict,
  DisconnectedNode,
  InvalidPermutation,
  JointNotActuated,
  AmbiguousResponse,
  PrimitiveCollision,
  DimensionMismatch,
  InconsistentHand,
  NonPositiveScale,
  ShapeMismatch,
  NotScalarLoss,
  SchemaVersionMismatch,
  MissingParameter,
  InvalidConfig,
  NaNDetected,
  LengthMismatch,
  IoError,
};

inline const char* error_code_name(ErrorCode c) {
  switch (c) {
    case ErrorCode::XmlSyntax: return "XmlSyntax";
    case ErrorCode::MissingLink: return "MissingLink";
    case ErrorCode::CycleDetected: return "CycleDetected";
    case ErrorCode::MultipleRoots: return "MultipleRoots";
    case ErrorCode::UnsupportedJointKind: return "UnsupportedJointKind";
    case ErrorCode::BranchAtNonWrist: return "BranchAtNonWrist";
    case ErrorCode::NoBranches: return "NoBranches";
    case ErrorCode::TooManyJointsInGroup: return "TooManyJointsInGroup";
    case ErrorCode::OverrideConflict: return "OverrideConflict";
    case ErrorCode::DisconnectedNode: return "DisconnectedNode";
    case ErrorCode::InvalidPermutation: return "InvalidPermutation";
    case ErrorCode::JointNotActuated: return "JointNotActuated";
    case ErrorCode::AmbiguousResponse: return "AmbiguousResponse";
    case ErrorCode::PrimitiveCollision: return "PrimitiveCollision";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::InconsistentHand: return "InconsistentHand";
    case ErrorCode::NonPositiveScale: return "NonPositiveScale";
    case ErrorCode::ShapeMismatch: return "ShapeMismatch";
    case ErrorCode::NotScalarLoss: return "NotScalarLoss";
    case ErrorCode::SchemaVersionMismatch: return "SchemaVersionMismatch";
    case ErrorCode::MissingParameter: return "MissingParameter";
    case ErrorCode::InvalidConfig: return "InvalidConfig";
    case ErrorCode::NaNDetected: return "NaNDetected";
    case ErrorCode::LengthMismatch: return "LengthMismatch";
    case ErrorCode::IoError: return "IoError";
  }
  return "Unknown";
}

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(error_code_name(code)) + ": " + what),
        code_(code) {}
  ErrorCode code() const { return code_; }

 private:
  ErrorCode code_;
};

// ---------------------------------------------------------------------------
// Vec3 / Mat3 / Pose

struct Vec3 {
  double x = 0, y = 0, z = 0;

  double& operator[](int i) { return i == 0 ? x : (i == 1 ? y : z); }
  double operator[](int i) const { return i == 0 ? x : (i == 1 ? y : z); }

  Vec3 operator+(const Vec3& o) const { return {x + o.x, y + o.y, z + o.z}; }
  Vec3 operator-(const Vec3& o) const { return {x - o.x, y - o.y, z - o.z}; }
  Vec3 operator*(double s) const { return {x * s, y * s, z * s}; }
  Vec3 operator-() const { return {-x, -y, -z}; }

  double dot(const Vec3& o) const { return x * o.x + y * o.y + z * o.z; }
  Vec3 cross(const Vec3& o) const {
    return {y * o.z - z * o.y, z * o.x - x * o.z, x * o.y - y * o.x};
  }
  double norm() const { return std::sqrt(dot(*this)); }
  Vec3 normalized() const {
    double n = norm();
    return n > 0 ? Vec3{x / n, y / n, z / n} : Vec3{};
  }
};

struct Mat3 {
  // row-major
  std::array<double, 9> m{1, 0, 0, 0, 1, 0, 0, 0, 1};

  double& operator()(int r, int c) { return m[3 * r + c]; }
  double operator()(int r, int c) const { return m[3 * r + c]; }

  static Mat3 identity() { return Mat3{}; }

  Mat3 operator*(const Mat3& o) const {
    Mat3 r;
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) {
        double s = 0;
        for (int k = 0; k < 3; ++k) s += (*this)(i, k) * o(k, j);
        r(i, j) = s;
      }
    return r;
  }
  Vec3 operator*(const Vec3& v) const {
    return {m[0] * v.x + m[1] * v.y + m[2] * v.z,
            m[3] * v.x + m[4] * v.y + m[5] * v.z,
            m[6] * v.x + m[7] * v.y + m[8] * v.z};
  }
  Mat3 transpose() const {
    Mat3 r;
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) r(i, j) = (*this)(j, i);
    return r;
  }

  // Rotation about a unit axis by angle (Rodrigues).
  static Mat3 axis_angle(const Vec3& axis, double angle) {
    double c = std::cos(angle), s = std::sin(angle), t = 1 - c;
    Vec3 a = axis;
    Mat3 r;
    r(0, 0) = t * a.x * a.x + c;
    r(0, 1) = t * a.x * a.y - s * a.z;
    r(0, 2) = t * a.x * a.z + s * a.y;
    r(1, 0) = t * a.x * a.y + s * a.z;
    r(1, 1) = t * a.y * a.y + c;
    r(1, 2) = t * a.y * a.z - s * a.x;
    r(2, 0) = t * a.x * a.z - s * a.y;
    r(2, 1) = t * a.y * a.z + s * a.x;
    r(2, 2) = t * a.z * a.z + c;
    return r;
  }

  // URDF rpy: extrinsic X-Y-Z, i.e. R = Rz(yaw) * Ry(pitch) * Rx(roll).
  static Mat3 from_rpy(double roll, double pitch, double yaw) {
    Mat3 rx = axis_angle({1, 0, 0}, roll);
    Mat3 ry = axis_angle({0, 1, 0}, pitch);
    Mat3 rz = axis_angle({0, 0, 1}, yaw);
    return rz * ry * rx;
  }

  // Rotation axis of a near-identity rotation (unnormalized log map).
  Vec3 log_axis() const {
    return {(*this)(2, 1) - (*this)(1, 2), (*this)(0, 2) - (*this)(2, 0),
            (*this)(1, 0) - (*this)(0, 1)};
  }
};

struct Pose {
  Mat3 rotation;
  Vec3 translation;

  static Pose identity() { return Pose{}; }

  Pose operator*(const Pose& o) const {
    return {rotation * o.rotation, rotation * o.translation + translation};
  }
  Vec3 apply(const Vec3& p) const { return rotation * p + translation; }
  Pose inverse() const {
    Mat3 rt = rotation.transpose();
    return {rt, -(rt * translation)};
  }
};

// 64-byte aligned allocator. Vectorized numeric kernels peel loops based on
// the runtime alignment of the data pointer, so unaligned heap buffers can
// make the same computation round differently from one allocation to the
// next. Pinning the alignment keeps every forward/backward bit-reproducible.
template <typename T>
struct AlignedAllocator {
  using value_type = T;
  static constexpr std::size_t kAlign = 64;
  AlignedAllocator() = default;
  template <typename U>
  AlignedAllocator(const AlignedAllocator<U>&) {}
  T* allocate(std::size_t n) {
    return static_cast<T*>(
        ::operator new(n * sizeof(T), std::align_val_t(kAlign)));
  }
  void deallocate(T* p, std::size_t) noexcept {
    ::operator delete(p, std::align_val_t(kAlign));
  }
  template <typename U>
  bool operator==(const AlignedAllocator<U>&) const { return true; }
  template <typename U>
  bool operator!=(const AlignedAllocator<U>&) const { return false; }
};

using AlignedVecd = std::vector<double, AlignedAllocator<double>>;

// Row-major dense matrix of doubles; the common currency between the graph
// compiler, feature builder and the network.
struct Matd {
  int rows = 0, cols = 0;
  AlignedVecd data;

  Matd() = default;
  Matd(int r, int c, double fill = 0.0) : rows(r), cols(c), data(size_t(r) * c, fill) {}

  double& operator()(int r, int c) { return data[size_t(r) * cols + c]; }
  double operator()(int r, int c) const { return data[size_t(r) * cols + c]; }

  static Matd identity(int n) {
    Matd m(n, n);
    for (int i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
  }
};

// ---------------------------------------------------------------------------
// Formatting and base64 helpers used by the file formats.

inline std::string fmt_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

inline std::string base64_encode(const uint8_t* data, size_t len) {
  static const char tbl[] =
      "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";
  std::string out;
  out.reserve((len + 2) / 3 * 4);
  for (size_t i = 0; i < len; i += 3) {
    uint32_t v = uint32_t(data[i]) << 16;
    if (i + 1 < len) v |= uint32_t(data[i + 1]) << 8;
    if (i + 2 < len) v |= uint32_t(data[i + 2]);
    out.push_back(tbl[(v >> 18) & 63]);
    out.push_back(tbl[(v >> 12) & 63]);
    out.push_back(i + 1 < len ? tbl[(v >> 6) & 63] : '=');
    out.push_back(i + 2 < len ? tbl[v & 63] : '=');
  }
  return out;
}

inline std::vector<uint8_t> base64_decode(const std::string& s) {
  auto val = [](char c) -> int {
    if (c >= 'A' && c <= 'Z') return c - 'A';
    if (c >= 'a' && c <= 'z') return c - 'a' + 26;
    if (c >= '0' && c <= '9') return c - '0' + 52;
    if (c == '+') return 62;
    if (c == '/') return 63;
    return -1;
  };
  std::vector<uint8_t> out;
  uint32_t acc = 0;
  int bits = 0;
  for (char c : s) {
    if (c == '=' || c == '\n' || c == '\r') continue;
    int v = val(c);
    if (v < 0) throw Error(ErrorCode::IoError, "invalid base64 character");
    acc = (acc << 6) | uint32_t(v);
    bits += 6;
    if (bits >= 8) {
      bits -= 8;
      out.push_back(uint8_t((acc >> bits) & 0xff));
    }
  }
  return out;
}

template <typename Alloc>
inline std::string base64_encode_doubles(const std::vector<double, Alloc>& v) {
  // little-endian 64-bit floats
  return base64_encode(reinterpret_cast<const uint8_t*>(v.data()),
                       v.size() * sizeof(double));
}

inline std::vector<double> base64_decode_doubles(const std::string& s) {
  std::vector<uint8_t> bytes = base64_decode(s);
  if (bytes.size() % sizeof(double) != 0)
    throw Error(ErrorCode::IoError, "base64 payload is not a multiple of 8 bytes");
  std::vector<double> out(bytes.size() / sizeof(double));
  std::memcpy(out.data(), bytes.data(), bytes.size());
  return out;
}

}  // namespace morphgrasp

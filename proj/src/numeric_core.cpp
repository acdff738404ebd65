#include "coffee/numeric_core.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <istream>
#include <numeric>
#include <ostream>

namespace coffee {

static_assert(std::endian::native == std::endian::little, "COF1 I/O assumes a little-endian host");

Parameter& ParamStore::add(const std::string& name, Eigen::Index rows, Eigen::Index cols) {
  if (rows < 1 || cols < 1) throw DimensionError("parameter '" + name + "' has an empty shape");
  auto it = params_.find(name);
  if (it != params_.end()) {
    if (it->second.value.rows() != rows || it->second.value.cols() != cols)
      throw DimensionError("parameter '" + name + "' re-registered with a different shape");
    return it->second;
  }
  Parameter p;
  p.value = Matrix::Zero(rows, cols);
  p.grad = Matrix::Zero(rows, cols);
  p.m = Matrix::Zero(rows, cols);
  p.v = Matrix::Zero(rows, cols);
  return params_.emplace(name, std::move(p)).first->second;
}

Parameter& ParamStore::at(const std::string& name) {
  auto it = params_.find(name);
  if (it == params_.end()) throw DataError("unknown parameter '" + name + "'");
  return it->second;
}

const Parameter& ParamStore::at(const std::string& name) const {
  auto it = params_.find(name);
  if (it == params_.end()) throw DataError("unknown parameter '" + name + "'");
  return it->second;
}

std::size_t ParamStore::size() const {
  std::size_t n = 0;
  for (const auto& [_, p] : params_) n += static_cast<std::size_t>(p.value.size());
  return n;
}

void ParamStore::zero_grad() {
  for (auto& [_, p] : params_) p.grad.setZero();
}

void ParamStore::zero_values() {
  for (auto& [_, p] : params_) p.value.setZero();
}

bool ParamStore::operator==(const ParamStore& other) const {
  if (step_ != other.step_ || params_.size() != other.params_.size()) return false;
  for (auto a = params_.begin(), b = other.params_.begin(); a != params_.end(); ++a, ++b) {
    if (a->first != b->first) return false;
    if (a->second.value != b->second.value || a->second.m != b->second.m ||
        a->second.v != b->second.v)
      return false;
  }
  return true;
}

void adam_step(ParamStore& store, const AdamConfig& c) {
  for (const auto& [name, p] : store.params_)
    if (!p.grad.allFinite()) throw PoisonedGradientError(name, store.step_);

  ++store.step_;
  const double t = static_cast<double>(store.step_);
  const double bc1 = 1.0 - std::pow(c.beta1, t);
  const double bc2 = 1.0 - std::pow(c.beta2, t);
  for (auto& [_, p] : store.params_) {
    p.m = c.beta1 * p.m + (1.0 - c.beta1) * p.grad;
    p.v = c.beta2 * p.v + (1.0 - c.beta2) * p.grad.cwiseAbs2();
    p.value.array() -= c.lr * (p.m.array() / bc1) / ((p.v.array() / bc2).sqrt() + c.eps);
    p.grad.setZero();
  }
}

// ---------------------------------------------------------------------------

namespace cof1 {

void write_magic(std::ostream& out) { out.write(kMagic, 4); }

void read_magic(std::istream& in) {
  char buf[4] = {};
  in.read(buf, 4);
  if (!in || std::memcmp(buf, kMagic, 4) != 0) throw DataError("not a COF1 file (bad magic)");
}

void write_tag(std::ostream& out, const char (&tag)[5]) { out.write(tag, 4); }

void expect_tag(std::istream& in, const char (&tag)[5]) {
  char buf[4] = {};
  in.read(buf, 4);
  if (!in || std::memcmp(buf, tag, 4) != 0)
    throw DataError(std::string("COF1: expected section tag ") + tag);
}

void write_u32(std::ostream& out, std::uint32_t v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof v);
}

void write_u64(std::ostream& out, std::uint64_t v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof v);
}

std::uint32_t read_u32(std::istream& in) {
  std::uint32_t v = 0;
  in.read(reinterpret_cast<char*>(&v), sizeof v);
  if (!in) throw DataError("COF1: truncated file");
  return v;
}

std::uint64_t read_u64(std::istream& in) {
  std::uint64_t v = 0;
  in.read(reinterpret_cast<char*>(&v), sizeof v);
  if (!in) throw DataError("COF1: truncated file");
  return v;
}

void write_matrix(std::ostream& out, const std::string& name, const Matrix& m) {
  write_u32(out, static_cast<std::uint32_t>(name.size()));
  out.write(name.data(), static_cast<std::streamsize>(name.size()));
  write_u64(out, static_cast<std::uint64_t>(m.rows()));
  write_u64(out, static_cast<std::uint64_t>(m.cols()));
  out.write(reinterpret_cast<const char*>(m.data()),
            static_cast<std::streamsize>(sizeof(double) * static_cast<std::size_t>(m.size())));
}

std::pair<std::string, Matrix> read_matrix(std::istream& in) {
  const std::uint32_t len = read_u32(in);
  if (len > (1u << 16)) throw DataError("COF1: implausible name length");
  std::string name(len, '\0');
  in.read(name.data(), len);
  const auto rows = read_u64(in);
  const auto cols = read_u64(in);
  if (rows > (1ull << 32) || cols > (1ull << 32)) throw DataError("COF1: implausible shape");
  Matrix m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
  in.read(reinterpret_cast<char*>(m.data()),
          static_cast<std::streamsize>(sizeof(double) * rows * cols));
  if (!in) throw DataError("COF1: truncated payload for '" + name + "'");
  return {std::move(name), std::move(m)};
}

}  // namespace cof1

void ParamStore::save(std::ostream& out) const {
  cof1::write_magic(out);
  cof1::write_u32(out, static_cast<std::uint32_t>(params_.size()));
  for (const auto& [name, p] : params_) cof1::write_matrix(out, name, p.value);
  cof1::write_u64(out, static_cast<std::uint64_t>(step_));
  cof1::write_u32(out, static_cast<std::uint32_t>(2 * params_.size()));
  for (const auto& [name, p] : params_) {
    cof1::write_matrix(out, name + ".m", p.m);
    cof1::write_matrix(out, name + ".v", p.v);
  }
}

void ParamStore::save(const std::string& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot open '" + path + "' for writing");
  save(out);
}

ParamStore ParamStore::load(std::istream& in) {
  ParamStore store;
  cof1::read_magic(in);
  const auto n = cof1::read_u32(in);
  for (std::uint32_t i = 0; i < n; ++i) {
    auto [name, m] = cof1::read_matrix(in);
    auto& p = store.add(name, m.rows(), m.cols());
    p.value = std::move(m);
  }
  store.step_ = static_cast<std::int64_t>(cof1::read_u64(in));
  const auto moments = cof1::read_u32(in);
  if (moments != 2 * n) throw DataError("COF1: Adam state does not match parameter section");
  for (std::uint32_t i = 0; i < moments; ++i) {
    auto [name, m] = cof1::read_matrix(in);
    const bool first = name.size() > 2 && name.ends_with(".m");
    const bool second = name.size() > 2 && name.ends_with(".v");
    if (!first && !second) throw DataError("COF1: unexpected Adam entry '" + name + "'");
    auto& p = store.at(name.substr(0, name.size() - 2));
    if (m.rows() != p.value.rows() || m.cols() != p.value.cols())
      throw DimensionError("COF1: Adam moment shape mismatch for '" + name + "'");
    (first ? p.m : p.v) = std::move(m);
  }
  return store;
}

ParamStore ParamStore::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open '" + path + "'");
  return load(in);
}

// ---------------------------------------------------------------------------

double relative_error(double analytic, double numeric) {
  return std::abs(analytic - numeric) / std::max(std::abs(analytic) + std::abs(numeric), 1e-7);
}

GradCheckReport grad_check(ParamStore& store, const std::function<double(bool)>& loss,
                           const GradCheckOptions& options) {
  store.zero_grad();
  loss(true);
  std::map<std::string, Matrix> analytic;
  for (const auto& [name, p] : store.entries()) analytic.emplace(name, p.grad);
  store.zero_grad();

  GradCheckReport report;
  std::mt19937_64 rng(options.seed);
  for (auto& [name, p] : store.entries()) {
    const Eigen::Index n = p.value.size();
    std::vector<Eigen::Index> coords(static_cast<std::size_t>(n));
    std::iota(coords.begin(), coords.end(), Eigen::Index{0});
    if (n > options.coords_per_param) {
      std::shuffle(coords.begin(), coords.end(), rng);
      coords.resize(static_cast<std::size_t>(options.coords_per_param));
    }
    for (Eigen::Index idx : coords) {
      double& x = p.value.data()[idx];
      const double saved = x;
      x = saved + options.step;
      const double plus = loss(false);
      x = saved - options.step;
      const double minus = loss(false);
      x = saved;
      const double numeric = (plus - minus) / (2.0 * options.step);
      const double err = relative_error(analytic.at(name).data()[idx], numeric);
      ++report.coords_checked;
      if (err > report.max_rel_error) {
        report.max_rel_error = err;
        report.worst_param = name;
        report.worst_index = idx;
      }
    }
  }
  store.zero_grad();
  return report;
}

}  // namespace coffee

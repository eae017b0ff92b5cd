#include "incseg/model.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <set>

#include <json.hpp>

#include "incseg/kernels.hpp"

namespace incseg {

using nlohmann::json;
using nlohmann::ordered_json;

void Standardizer::raw_features(const PointXYZI& p,
                                double out[kInputDim]) const {
  const double x = p.x, y = p.y, z = p.z;
  out[0] = x;
  out[1] = y;
  out[2] = z;
  out[3] = std::sqrt(x * x + y * y);
  out[4] = z;
  out[5] = p.intensity;
}

void Standardizer::apply(const PointXYZI& p, double out[kInputDim]) const {
  raw_features(p, out);
  for (std::size_t d = 0; d < kInputDim; ++d)
    out[d] = (out[d] - mean[d]) / stdev[d];
}

Standardizer fit_standardizer(std::span<const ScanRecord> scans,
                              const LearningMap& map) {
  if (scans.empty())
    throw DataError("cannot fit standardization constants on zero scans");
  std::array<double, kInputDim> sum{}, sumsq{};
  std::uint64_t n = 0;
  Standardizer stdz;  // zero mean, unit std so raw_features pass through
  stdz.stdev.fill(1.0);
  double raw[kInputDim];
  for (const auto& rec : scans) {
    const auto cloud = read_scan(rec.bin, rec.label, map);
    for (const auto& p : cloud.points) {
      stdz.raw_features(p, raw);
      for (std::size_t d = 0; d < kInputDim; ++d) {
        sum[d] += raw[d];
        sumsq[d] += raw[d] * raw[d];
      }
      ++n;
    }
  }
  Standardizer out;
  for (std::size_t d = 0; d < kInputDim; ++d) {
    const double mean = sum[d] / static_cast<double>(n);
    const double var =
        std::max(sumsq[d] / static_cast<double>(n) - mean * mean, 1e-12);
    out.mean[d] = mean;
    out.stdev[d] = std::sqrt(var);
  }
  return out;
}

namespace {

std::vector<ParamTensor SegmenterState::*> tensor_order() {
  return {&SegmenterState::w1, &SegmenterState::b1, &SegmenterState::w2,
          &SegmenterState::b2, &SegmenterState::wh, &SegmenterState::bh};
}

}  // namespace

int SegmenterState::row_of(ClassId c) const {
  for (std::size_t i = 0; i < class_list.size(); ++i)
    if (class_list[i] == c) return static_cast<int>(i);
  return -1;
}

std::size_t SegmenterState::num_params() const {
  std::size_t n = 0;
  for (auto t : tensor_order()) n += (this->*t).size();
  return n;
}

double SegmenterState::get_param(std::size_t i) const {
  for (auto t : tensor_order()) {
    const auto& tensor = this->*t;
    if (i < tensor.size()) return tensor.value[i];
    i -= tensor.size();
  }
  throw ConfigError("parameter index out of range");
}

void SegmenterState::set_param(std::size_t i, double value) {
  for (auto t : tensor_order()) {
    auto& tensor = this->*t;
    if (i < tensor.size()) {
      tensor.value[i] = value;
      return;
    }
    i -= tensor.size();
  }
  throw ConfigError("parameter index out of range");
}

SegmenterState init_segmenter(const Standardizer& stdz,
                              std::vector<ClassId> class_list,
                              std::uint64_t seed) {
  if (class_list.empty()) throw ConfigError("class list is empty");
  {
    std::set<ClassId> uniq(class_list.begin(), class_list.end());
    if (uniq.size() != class_list.size())
      throw ConfigError("class list contains duplicates");
    if (uniq.count(kUnlabeled))
      throw ConfigError("the unlabeled sentinel cannot be an output class");
  }
  SegmenterState s;
  s.stdz = stdz;
  s.class_list = std::move(class_list);
  s.seed = seed;
  s.w1.init(kHidden1, kInputDim);
  s.b1.init(kHidden1, 1);
  s.w2.init(kFeatureDim, kHidden1);
  s.b2.init(kFeatureDim, 1);
  s.wh.init(s.class_list.size(), kFeatureDim);
  s.bh.init(s.class_list.size(), 1);

  Rng rng(derive_seed(seed, /*tag=*/0xe5c0de));
  const double scale1 = 1.0 / std::sqrt(static_cast<double>(kInputDim));
  for (auto& w : s.w1.value) w = rng.normal(0.0, scale1);
  const double scale2 = 1.0 / std::sqrt(static_cast<double>(kHidden1));
  for (auto& w : s.w2.value) w = rng.normal(0.0, scale2);
  for (std::size_t r = 0; r < s.class_list.size(); ++r) {
    Rng row_rng(derive_seed(seed, /*tag=*/0x4ead, s.class_list[r]));
    for (std::size_t j = 0; j < kFeatureDim; ++j)
      s.wh.value[r * kFeatureDim + j] = row_rng.normal(0.0, 1e-2);
    s.bh.value[r] = row_rng.normal(0.0, 1e-2);
  }
  return s;
}

Prediction forward(const SegmenterState& state,
                   std::span<const PointXYZI> points, ForwardCache* cache) {
  const std::size_t n = points.size();
  const std::size_t c = state.class_list.size();
  const auto& k = kernels::active();

  Mat x(n, kInputDim);
  for (std::size_t i = 0; i < n; ++i) {
    state.stdz.apply(points[i], x.row(i));
    for (std::size_t d = 0; d < kInputDim; ++d) {
      if (!std::isfinite(x.at(i, d)))
        throw NumericError("non-finite input feature at point " +
                           std::to_string(i));
    }
  }

  Mat pre1(n, kHidden1), h1(n, kHidden1), pre2(n, kFeatureDim);
  Prediction pred;
  pred.class_list = state.class_list;
  pred.features = Mat(n, kFeatureDim);
  pred.logits = Mat(n, c);
  pred.softmax = Mat(n, c);

  k.affine_forward(n, kInputDim, kHidden1, x.data(), state.w1.value.data(),
                   state.b1.value.data(), pre1.data());
  k.act_forward(n * kHidden1, pre1.data(), h1.data());
  k.affine_forward(n, kHidden1, kFeatureDim, h1.data(), state.w2.value.data(),
                   state.b2.value.data(), pre2.data());
  k.act_forward(n * kFeatureDim, pre2.data(), pred.features.data());
  k.affine_forward(n, kFeatureDim, c, pred.features.data(),
                   state.wh.value.data(), state.bh.value.data(),
                   pred.logits.data());

  for (std::size_t i = 0; i < n; ++i) {
    const double* z = pred.logits.row(i);
    double* p = pred.softmax.row(i);
    double zmax = z[0];
    for (std::size_t j = 1; j < c; ++j) zmax = std::max(zmax, z[j]);
    double sum = 0;
    for (std::size_t j = 0; j < c; ++j) {
      p[j] = std::exp(z[j] - zmax);
      sum += p[j];
    }
    for (std::size_t j = 0; j < c; ++j) p[j] /= sum;
  }

  if (cache) {
    cache->x = std::move(x);
    cache->pre1 = std::move(pre1);
    cache->h1 = std::move(h1);
    cache->pre2 = std::move(pre2);
  }
  return pred;
}

ParamGrads backward(const SegmenterState& state, const ForwardCache& cache,
                    const Mat& dlogits, const Mat* dfeatures) {
  const std::size_t n = cache.x.rows;
  const std::size_t c = state.class_list.size();
  if (dlogits.rows != n || dlogits.cols != c)
    throw ConfigError("dlogits shape mismatch in backward()");
  const auto& k = kernels::active();

  ParamGrads g;
  g.w1 = Mat(kHidden1, kInputDim);
  g.w2 = Mat(kFeatureDim, kHidden1);
  g.wh = Mat(c, kFeatureDim);
  g.b1.assign(kHidden1, 0.0);
  g.b2.assign(kFeatureDim, 0.0);
  g.bh.assign(c, 0.0);

  // Features are needed both as layer input (for dWh) and as activation
  // output (for the chain through the second activation).
  Mat features(n, kFeatureDim);
  k.act_forward(n * kFeatureDim, cache.pre2.data(), features.data());

  k.affine_backward_params(n, kFeatureDim, c, features.data(), dlogits.data(),
                           g.wh.data(), g.bh.data());

  Mat dfeat(n, kFeatureDim);
  k.affine_backward_input(n, kFeatureDim, c, dlogits.data(),
                          state.wh.value.data(), dfeat.data());
  if (dfeatures) {
    if (dfeatures->rows != n || dfeatures->cols != kFeatureDim)
      throw ConfigError("dfeatures shape mismatch in backward()");
    for (std::size_t i = 0; i < dfeat.size(); ++i)
      dfeat.a[i] += dfeatures->a[i];
  }

  Mat dpre2(n, kFeatureDim);
  k.act_backward(n * kFeatureDim, cache.pre2.data(), dfeat.data(),
                 dpre2.data());
  k.affine_backward_params(n, kHidden1, kFeatureDim, cache.h1.data(),
                           dpre2.data(), g.w2.data(), g.b2.data());

  Mat dh1(n, kHidden1);
  k.affine_backward_input(n, kHidden1, kFeatureDim, dpre2.data(),
                          state.w2.value.data(), dh1.data());
  Mat dpre1(n, kHidden1);
  k.act_backward(n * kHidden1, cache.pre1.data(), dh1.data(), dpre1.data());
  k.affine_backward_params(n, kInputDim, kHidden1, cache.x.data(),
                           dpre1.data(), g.w1.data(), g.b1.data());
  return g;
}

void adam_step(SegmenterState& state, const ParamGrads& grads, double lr,
               double beta1, double beta2, double eps) {
  state.adam_t += 1;
  const double t = static_cast<double>(state.adam_t);
  const double c1 = 1.0 / (1.0 - std::pow(beta1, t));
  const double c2 = 1.0 / (1.0 - std::pow(beta2, t));
  const auto& k = kernels::active();

  auto update = [&](ParamTensor& p, const double* g, std::size_t n) {
    k.adam_update(n, p.value.data(), g, p.m.data(), p.v.data(), lr, beta1,
                  beta2, eps, c1, c2);
  };
  update(state.w1, grads.w1.data(), state.w1.size());
  update(state.b1, grads.b1.data(), state.b1.size());
  update(state.w2, grads.w2.data(), state.w2.size());
  update(state.b2, grads.b2.data(), state.b2.size());
  update(state.wh, grads.wh.data(), state.wh.size());
  update(state.bh, grads.bh.data(), state.bh.size());
}

SegmenterState expand_head(const SegmenterState& state,
                           std::span<const ClassId> new_classes) {
  for (ClassId c : new_classes) {
    if (c == kUnlabeled)
      throw ConfigError("the unlabeled sentinel cannot be an output class");
    if (state.row_of(c) >= 0)
      throw ConfigError("expand_head: class id " + std::to_string(c) +
                        " is already in the class list");
  }
  {
    std::set<ClassId> uniq(new_classes.begin(), new_classes.end());
    if (uniq.size() != new_classes.size())
      throw ConfigError("expand_head: duplicate new class");
  }

  SegmenterState out = state;  // copies values and moments bit-exactly
  const std::size_t old_rows = state.class_list.size();
  const std::size_t rows = old_rows + new_classes.size();
  out.class_list.insert(out.class_list.end(), new_classes.begin(),
                        new_classes.end());
  out.wh.rows = rows;
  out.bh.rows = rows;
  out.wh.value.resize(rows * kFeatureDim, 0.0);
  out.wh.m.resize(rows * kFeatureDim, 0.0);
  out.wh.v.resize(rows * kFeatureDim, 0.0);
  out.bh.value.resize(rows, 0.0);
  out.bh.m.resize(rows, 0.0);
  out.bh.v.resize(rows, 0.0);
  for (std::size_t r = old_rows; r < rows; ++r) {
    Rng row_rng(derive_seed(state.seed, /*tag=*/0x4ead, out.class_list[r]));
    for (std::size_t j = 0; j < kFeatureDim; ++j)
      out.wh.value[r * kFeatureDim + j] = row_rng.normal(0.0, 1e-2);
    out.bh.value[r] = row_rng.normal(0.0, 1e-2);
  }
  return out;
}

namespace {

constexpr char kMagic[8] = {'I', 'S', 'E', 'G', 'C', 'K', 'P', 'T'};
constexpr std::uint32_t kVersion = 1;

void append_doubles(std::vector<std::byte>& out, const std::vector<double>& v) {
  const std::size_t at = out.size();
  out.resize(at + v.size() * 8);
  for (std::size_t i = 0; i < v.size(); ++i)
    store_le_f64(out.data() + at + i * 8, v[i]);
}

void read_doubles(const std::vector<std::byte>& in, std::size_t& off,
                  std::vector<double>& v, std::size_t count) {
  if (off + count * 8 > in.size()) throw DataError("checkpoint truncated");
  v.resize(count);
  for (std::size_t i = 0; i < count; ++i)
    v[i] = load_le_f64(in.data() + off + i * 8);
  off += count * 8;
}

}  // namespace

void save_checkpoint(const SegmenterState& state,
                     const std::filesystem::path& path) {
  ordered_json header;
  header["class_list"] = state.class_list;
  header["adam_t"] = state.adam_t;
  header["seed"] = state.seed;
  header["step"] = state.step;
  header["scenario"] = state.scenario;
  ordered_json dims = ordered_json::array();
  auto add_dims = [&dims](const ParamTensor& t) {
    dims.push_back(ordered_json::array({t.rows, t.cols}));
  };
  add_dims(state.w1);
  add_dims(state.b1);
  add_dims(state.w2);
  add_dims(state.b2);
  add_dims(state.wh);
  add_dims(state.bh);
  header["tensors"] = std::move(dims);
  const std::string htext = header.dump();

  std::vector<std::byte> out;
  out.insert(out.end(), reinterpret_cast<const std::byte*>(kMagic),
             reinterpret_cast<const std::byte*>(kMagic) + 8);
  out.resize(out.size() + 8);
  store_le_u32(out.data() + 8, kVersion);
  store_le_u32(out.data() + 12, static_cast<std::uint32_t>(htext.size()));
  out.insert(out.end(), reinterpret_cast<const std::byte*>(htext.data()),
             reinterpret_cast<const std::byte*>(htext.data()) + htext.size());

  append_doubles(out, {state.stdz.mean.begin(), state.stdz.mean.end()});
  append_doubles(out, {state.stdz.stdev.begin(), state.stdz.stdev.end()});
  for (const ParamTensor* t :
       {&state.w1, &state.b1, &state.w2, &state.b2, &state.wh, &state.bh}) {
    append_doubles(out, t->value);
    append_doubles(out, t->m);
    append_doubles(out, t->v);
  }
  write_file_bytes(path, out);
}

SegmenterState load_checkpoint(const std::filesystem::path& path) {
  const auto bytes = read_file_bytes(path);
  if (bytes.size() < 16 || std::memcmp(bytes.data(), kMagic, 8) != 0)
    throw DataError(path.string() + ": not a checkpoint file");
  if (load_le_u32(bytes.data() + 8) != kVersion)
    throw DataError(path.string() + ": unsupported checkpoint version");
  const std::size_t hlen = load_le_u32(bytes.data() + 12);
  if (16 + hlen > bytes.size())
    throw DataError(path.string() + ": checkpoint truncated");
  json header;
  try {
    header = json::parse(
        std::string(reinterpret_cast<const char*>(bytes.data() + 16), hlen));
  } catch (const json::parse_error& e) {
    throw DataError(path.string() + ": bad checkpoint header: " + e.what());
  }

  SegmenterState s;
  s.class_list = header.at("class_list").get<std::vector<ClassId>>();
  s.adam_t = header.at("adam_t").get<std::uint64_t>();
  s.seed = header.at("seed").get<std::uint64_t>();
  s.step = header.at("step").get<std::uint32_t>();
  s.scenario = header.at("scenario").get<std::string>();
  const auto dims = header.at("tensors");
  if (dims.size() != 6) throw DataError(path.string() + ": bad tensor table");

  std::size_t off = 16 + hlen;
  std::vector<double> tmp;
  read_doubles(bytes, off, tmp, kInputDim);
  std::copy(tmp.begin(), tmp.end(), s.stdz.mean.begin());
  read_doubles(bytes, off, tmp, kInputDim);
  std::copy(tmp.begin(), tmp.end(), s.stdz.stdev.begin());

  ParamTensor* tensors[] = {&s.w1, &s.b1, &s.w2, &s.b2, &s.wh, &s.bh};
  for (std::size_t i = 0; i < 6; ++i) {
    const std::size_t rows = dims[i][0].get<std::size_t>();
    const std::size_t cols = dims[i][1].get<std::size_t>();
    tensors[i]->rows = rows;
    tensors[i]->cols = cols;
    read_doubles(bytes, off, tensors[i]->value, rows * cols);
    read_doubles(bytes, off, tensors[i]->m, rows * cols);
    read_doubles(bytes, off, tensors[i]->v, rows * cols);
  }
  if (off != bytes.size())
    throw DataError(path.string() + ": trailing bytes in checkpoint");
  return s;
}

}  // namespace incseg

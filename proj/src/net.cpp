#include "rvf/net.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <random>
#include <stdexcept>
#include <string>

namespace rvf {

void NetConfig::validate() const {
  if (vfe_units.empty() || trunk_channels.empty()) throw std::invalid_argument("net: empty layer list");
  for (int u : vfe_units) {
    if (u < 2 || u % 2 != 0) throw std::invalid_argument("net: VFE widths must be positive and even");
  }
  for (int c : sparse_channels) {
    if (c < 1) throw std::invalid_argument("net: sparse widths must be positive");
  }
  for (int c : trunk_channels) {
    if (c < 1) throw std::invalid_argument("net: trunk widths must be positive");
  }
  if (trunk_strides.size() != trunk_channels.size()) {
    throw std::invalid_argument("net: one stride per trunk block required");
  }
  for (int s : trunk_strides) {
    if (s < 1) throw std::invalid_argument("net: strides must be at least 1");
  }
  if (!(cls_prior > 0.0 && cls_prior < 1.0)) throw std::invalid_argument("net: cls_prior must lie in (0, 1)");
}

int NetConfig::total_stride() const {
  int s = 1;
  for (int v : trunk_strides) s *= v;
  return s;
}

bool operator==(const NetConfig& a, const NetConfig& b) {
  return a.vfe_units == b.vfe_units && a.sparse_channels == b.sparse_channels &&
         a.trunk_channels == b.trunk_channels && a.trunk_strides == b.trunk_strides && a.cls_prior == b.cls_prior;
}

namespace {

std::vector<double> he_normal(std::mt19937_64& rng, std::size_t count, int fan_in) {
  std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / fan_in));
  std::vector<double> out(count);
  for (double& v : out) v = dist(rng);
  return out;
}

int trunk_input_channels(const NetConfig& net, const GridConfig& grid) {
  const int c = net.sparse_channels.empty() ? net.vfe_units.back() : net.sparse_channels.back();
  return grid.nz() * c;
}

}  // namespace

ad::ParamStore init_params(const NetConfig& net, const GridConfig& grid, std::uint64_t seed) {
  net.validate();
  grid.validate();
  std::mt19937_64 rng(seed);
  ad::ParamStore ps;
  int in = kPointFeatures;
  for (std::size_t b = 0; b < net.vfe_units.size(); ++b) {
    const int half = net.vfe_units[b] / 2;
    const std::string p = "vfe." + std::to_string(b);
    ps.add(p + ".weight", {in, half}, he_normal(rng, static_cast<std::size_t>(in) * half, in));
    ps.add(p + ".bias", {half}, std::vector<double>(half, 0.0));
    in = net.vfe_units[b];
  }
  for (std::size_t b = 0; b < net.sparse_channels.size(); ++b) {
    const int out = net.sparse_channels[b];
    const std::string p = "sparse." + std::to_string(b);
    ps.add(p + ".weight", {27, in, out}, he_normal(rng, static_cast<std::size_t>(27) * in * out, 27 * in));
    ps.add(p + ".bias", {out}, std::vector<double>(out, 0.0));
    in = out;
  }
  in = trunk_input_channels(net, grid);
  for (std::size_t b = 0; b < net.trunk_channels.size(); ++b) {
    const int out = net.trunk_channels[b];
    const std::string p = "trunk." + std::to_string(b);
    ps.add(p + ".weight", {3, 3, in, out}, he_normal(rng, static_cast<std::size_t>(9) * in * out, 9 * in));
    ps.add(p + ".bias", {out}, std::vector<double>(out, 0.0));
    in = out;
  }
  const auto head = [&](const std::string& name, int out, double bias) {
    // Small heads keep initial regressions near the anchor.
    auto w = he_normal(rng, static_cast<std::size_t>(in) * out, in);
    for (double& v : w) v *= 0.1;
    ps.add("head." + name + ".weight", {1, 1, in, out}, std::move(w));
    ps.add("head." + name + ".bias", {out}, std::vector<double>(out, bias));
  };
  head("cls", kAnchorsPerCell, -std::log((1.0 - net.cls_prior) / net.cls_prior));
  head("reg", kAnchorsPerCell * kRegDims, 0.0);
  head("dir", kAnchorsPerCell, 0.0);
  return ps;
}

ad::Tensor vfe_forward(const ad::ParamStore& params, const ad::Tensor& point_features,
                       std::span<const std::size_t> offsets, std::size_t blocks) {
  ad::Tensor x = point_features;
  for (std::size_t b = 0; b < blocks; ++b) {
    const std::string p = "vfe." + std::to_string(b);
    const ad::Tensor h = ad::relu(ad::linear(x, params.at(p + ".weight"), params.at(p + ".bias")));
    x = ad::concat_pooled(h, ad::segment_max(h, offsets), offsets);
  }
  return ad::segment_max(x, offsets);
}

RvfNet::RvfNet(NetConfig net, GridConfig grid, std::uint64_t seed)
    : net_(std::move(net)), grid_(grid), params_(init_params(net_, grid_, seed)) {}

RvfNet::RvfNet(NetConfig net, GridConfig grid, ad::ParamStore params)
    : net_(std::move(net)), grid_(grid), params_(std::move(params)) {
  net_.validate();
  grid_.validate();
  check_params();
}

void RvfNet::check_params() const {
  const ad::ParamStore fresh = init_params(net_, grid_, 0);
  if (fresh.size() != params_.size()) throw std::invalid_argument("net: parameter set does not match config");
  for (std::size_t k = 0; k < fresh.size(); ++k) {
    const auto& [name, t] = fresh.entries()[k];
    const auto& [oname, ot] = params_.entries()[k];
    if (name != oname || t.shape() != ot.shape()) {
      throw std::invalid_argument("net: parameter " + oname + " does not match config");
    }
  }
}

NetworkOutput RvfNet::forward(const VoxelBatch& batch) const {
  const std::size_t k = batch.num_voxels();
  const std::size_t n = batch.num_points();
  if (batch.offsets.size() != k + 1 || batch.features.size() != n * kPointFeatures) {
    throw std::invalid_argument("net: malformed voxel batch");
  }
  const int nx = grid_.nx();
  const int ny = grid_.ny();
  const int nz = grid_.nz();
  for (const VoxelCoord& c : batch.coords) {
    if (c.ix < 0 || c.ix >= nx || c.iy < 0 || c.iy >= ny || c.iz < 0 || c.iz >= nz) {
      throw std::invalid_argument("net: voxel outside the configured grid");
    }
  }

  std::vector<double> scaled(batch.features);
  for (std::size_t r = 0; r < n; ++r) {
    for (int c = 0; c < kPointFeatures; ++c) scaled[r * kPointFeatures + c] *= kFeatureScale[c];
  }
  const ad::Tensor points = ad::Tensor::constant({static_cast<int>(n), kPointFeatures}, std::move(scaled));
  ad::Tensor x = vfe_forward(params_, points, batch.offsets, net_.vfe_units.size());

  const auto rules = std::make_shared<const ad::Rulebook>(ad::Rulebook::build(batch.coords));
  for (std::size_t b = 0; b < net_.sparse_channels.size(); ++b) {
    const std::string p = "sparse." + std::to_string(b);
    x = ad::relu(ad::submanifold_conv3d(x, rules, params_.at(p + ".weight"), params_.at(p + ".bias")));
  }

  ad::Tensor bev = ad::to_bev_dense(x, batch.coords, nx, ny, nz);
  for (std::size_t b = 0; b < net_.trunk_channels.size(); ++b) {
    const std::string p = "trunk." + std::to_string(b);
    bev = ad::relu(ad::conv2d(bev, params_.at(p + ".weight"), params_.at(p + ".bias"), net_.trunk_strides[b], 1));
  }
  const AnchorGrid ag = anchor_grid();
  if (bev.dim(0) != ag.ny || bev.dim(1) != ag.nx) throw std::logic_error("net: head grid does not match anchors");

  NetworkOutput out;
  out.cls = ad::conv2d(bev, params_.at("head.cls.weight"), params_.at("head.cls.bias"), 1, 0);
  out.reg = ad::reshape(ad::conv2d(bev, params_.at("head.reg.weight"), params_.at("head.reg.bias"), 1, 0),
                    {ag.ny, ag.nx, kAnchorsPerCell, kRegDims});
  out.dir = ad::conv2d(bev, params_.at("head.dir.weight"), params_.at("head.dir.bias"), 1, 0);
  return out;
}

// ---- checkpoints ------------------------------------------------------------

namespace {

constexpr char kMagic[8] = {'R', 'V', 'F', 'C', 'K', 'P', 'T', '1'};

template <typename T>
void write_le(std::ostream& os, T v) {
  static_assert(std::endian::native == std::endian::little, "little-endian host required");
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_le(std::istream& is) {
  T v{};
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!is) throw std::runtime_error("checkpoint: truncated file");
  return v;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const ad::ParamStore& params, std::uint64_t config_hash) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw std::runtime_error("checkpoint: cannot write " + path.string());
  os.write(kMagic, sizeof(kMagic));
  write_le<std::uint64_t>(os, config_hash);
  write_le<std::uint32_t>(os, static_cast<std::uint32_t>(params.size()));
  for (const auto& [name, t] : params.entries()) {
    write_le<std::uint32_t>(os, static_cast<std::uint32_t>(name.size()));
    os.write(name.data(), static_cast<std::streamsize>(name.size()));
    write_le<std::uint32_t>(os, static_cast<std::uint32_t>(t.shape().size()));
    for (int d : t.shape()) write_le<std::uint32_t>(os, static_cast<std::uint32_t>(d));
    for (double v : t.data()) write_le<double>(os, v);
  }
  if (!os) throw std::runtime_error("checkpoint: write failed for " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("checkpoint: cannot open " + path.string());
  char magic[8];
  is.read(magic, sizeof(magic));
  if (!is || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
    throw std::runtime_error("checkpoint: bad magic in " + path.string());
  }
  Checkpoint ck;
  ck.config_hash = read_le<std::uint64_t>(is);
  const auto count = read_le<std::uint32_t>(is);
  for (std::uint32_t k = 0; k < count; ++k) {
    const auto len = read_le<std::uint32_t>(is);
    std::string name(len, '\0');
    is.read(name.data(), len);
    const auto rank = read_le<std::uint32_t>(is);
    std::vector<int> shape(rank);
    for (auto& d : shape) d = static_cast<int>(read_le<std::uint32_t>(is));
    std::vector<double> values(ad::numel_of(shape));
    for (double& v : values) v = read_le<double>(is);
    ck.params.add(name, std::move(shape), std::move(values));
  }
  return ck;
}

}  // namespace rvf

#pragma once

// Snapshot files: one line of JSON describing the grids and parameters, a
// newline, then the raw IEEE-754 doubles in native byte order. Reading a
// snapshot back yields bit-identical values.

#include "vicsek/errors.hpp"
#include "vicsek/field.hpp"
#include "vicsek/particle_sim.hpp"

#include "json.hpp"

#include <bit>
#include <cstdint>
#include <fstream>
#include <memory>
#include <string>
#include <vector>

namespace vicsek {

namespace detail {

inline void write_blob(const std::string& path, const nlohmann::json& header, const std::vector<double>& data) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("snapshot: cannot open " + path + " for writing");
  const std::string h = header.dump();
  out.write(h.data(), static_cast<std::streamsize>(h.size()));
  out.put('\n');
  out.write(reinterpret_cast<const char*>(data.data()), static_cast<std::streamsize>(data.size() * sizeof(double)));
  if (!out) throw std::runtime_error("snapshot: write failed for " + path);
}

inline std::pair<nlohmann::json, std::vector<double>> read_blob(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("snapshot: cannot open " + path);
  std::string line;
  std::getline(in, line);
  nlohmann::json header = nlohmann::json::parse(line);
  const std::size_t count = header.at("count").get<std::size_t>();
  std::vector<double> data(count);
  in.read(reinterpret_cast<char*>(data.data()), static_cast<std::streamsize>(count * sizeof(double)));
  if (in.gcount() != static_cast<std::streamsize>(count * sizeof(double)))
    throw std::runtime_error("snapshot: truncated data in " + path);
  return {std::move(header), std::move(data)};
}

inline const char* byte_order() { return std::endian::native == std::endian::little ? "little" : "big"; }

}  // namespace detail

/// Writes a circle-grid field. `extra` is merged into the header.
inline void write_snapshot(const std::string& path, const DistributionField<2>& f,
                           const nlohmann::json& extra = nlohmann::json::object()) {
  nlohmann::json h = extra;
  h["format"] = "vicsek-field";
  h["dim_x"] = f.space().dim();
  h["cells_per_axis"] = f.space().n();
  h["length"] = f.space().length();
  h["angular_nodes"] = f.nodes();
  h["time"] = f.time();
  h["initial_mass"] = f.initial_mass();
  h["layout"] = "cell-major, node fastest";
  h["byte_order"] = detail::byte_order();
  h["count"] = f.values().size();
  detail::write_blob(path, h, f.values());
}

struct FieldSnapshot {
  nlohmann::json header;
  DistributionField<2> field;
};

inline FieldSnapshot read_snapshot(const std::string& path) {
  auto [h, data] = detail::read_blob(path);
  if (h.value("format", "") != "vicsek-field") throw std::runtime_error("snapshot: " + path + " is not a field snapshot");
  SpatialGrid sg(h.at("dim_x").get<int>(), h.at("cells_per_axis").get<std::size_t>(), h.at("length").get<double>());
  auto ag = std::make_shared<const AngularGrid<2>>(AngularGrid<2>::uniform(h.at("angular_nodes").get<std::size_t>()));
  DistributionField<2> f(sg, ag, std::move(data), h.at("time").get<double>());
  return {std::move(h), std::move(f)};
}

/// Ensemble dump: positions followed by directions.
template <int D>
void write_ensemble(const std::string& path, const ParticleEnsemble<D>& ens,
                    const nlohmann::json& extra = nlohmann::json::object()) {
  nlohmann::json h = extra;
  h["format"] = "vicsek-ensemble";
  h["N"] = ens.size();
  h["dim"] = D;
  h["dim_x"] = ens.dim_x;
  h["length"] = ens.length;
  h["seed"] = ens.seed;
  h["step"] = ens.step;
  h["time"] = ens.time;
  h["byte_order"] = detail::byte_order();
  std::vector<double> data = ens.positions;
  for (const auto& d : ens.directions) data.insert(data.end(), d.vec().begin(), d.vec().end());
  h["count"] = data.size();
  detail::write_blob(path, h, data);
}

template <int D>
ParticleEnsemble<D> read_ensemble(const std::string& path) {
  auto [h, data] = detail::read_blob(path);
  if (h.value("format", "") != "vicsek-ensemble" || h.at("dim").get<int>() != D)
    throw std::runtime_error("snapshot: " + path + " is not an ensemble of this dimension");
  ParticleEnsemble<D> ens;
  const std::size_t n = h.at("N").get<std::size_t>();
  ens.dim_x = h.at("dim_x").get<int>();
  ens.length = h.at("length").get<double>();
  ens.seed = h.at("seed").get<std::uint64_t>();
  ens.step = h.at("step").get<std::uint64_t>();
  ens.time = h.at("time").get<double>();
  const std::size_t np = n * static_cast<std::size_t>(ens.dim_x);
  if (data.size() != np + n * D) throw std::runtime_error("snapshot: ensemble size mismatch in " + path);
  ens.positions.assign(data.begin(), data.begin() + static_cast<std::ptrdiff_t>(np));
  for (std::size_t i = 0; i < n; ++i) {
    Vec<D> v;
    for (int k = 0; k < D; ++k) v[k] = data[np + i * D + k];
    ens.directions.push_back(Direction<D>::checked(v, 1e-12));
  }
  return ens;
}

}  // namespace vicsek

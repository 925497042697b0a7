#pragma once

#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "dryobs/errors.hpp"
#include "dryobs/fvm.hpp"
#include "dryobs/grid.hpp"
#include "dryobs/pod.hpp"

namespace dryobs::io {

inline constexpr const char* kHeaderEnd = "END_HEADER";

/// Shortest round-trip text form of a double.
inline std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

/// Minimal CSV writer; numbers are written with %.17g so output is byte-stable.
class CsvWriter {
 public:
  explicit CsvWriter(const std::filesystem::path& path) : path_(path), out_(path) {
    if (!out_) throw ConfigurationError("cannot write " + path.string());
  }

  void header(const std::vector<std::string>& names) {
    for (std::size_t k = 0; k < names.size(); ++k) out_ << (k ? "," : "") << names[k];
    out_ << '\n';
  }

  void row(const std::vector<double>& values) {
    for (std::size_t k = 0; k < values.size(); ++k) out_ << (k ? "," : "") << fmt(values[k]);
    out_ << '\n';
  }

  /// Mixed row: text cells are written verbatim.
  void row(const std::vector<std::string>& cells) {
    for (std::size_t k = 0; k < cells.size(); ++k) out_ << (k ? "," : "") << cells[k];
    out_ << '\n';
  }

  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
  std::ofstream out_;
};

struct CsvTable {
  std::vector<std::string> columns;
  std::vector<std::vector<std::string>> rows;

  int column(const std::string& name) const {
    for (std::size_t k = 0; k < columns.size(); ++k) {
      if (columns[k] == name) return static_cast<int>(k);
    }
    throw InvalidArgument("CSV has no column '" + name + "'");
  }

  std::vector<double> numbers(const std::string& name) const {
    const int c = column(name);
    std::vector<double> out;
    out.reserve(rows.size());
    for (const auto& r : rows) out.push_back(std::stod(r.at(c)));
    return out;
  }
};

inline CsvTable read_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigurationError("cannot read " + path.string());
  CsvTable t;
  std::string line;
  auto split = [](const std::string& s) {
    std::vector<std::string> cells;
    std::stringstream ss(s);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    return cells;
  };
  if (std::getline(in, line)) t.columns = split(line);
  while (std::getline(in, line)) {
    if (!line.empty()) t.rows.push_back(split(line));
  }
  return t;
}

// ---------------------------------------------------------------------------
// Header + binary container

using Header = std::map<std::string, std::string>;

namespace detail {

inline void write_container(const std::filesystem::path& path, const std::vector<std::pair<std::string, std::string>>& header,
                            const std::vector<const Eigen::MatrixXd*>& arrays) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigurationError("cannot write " + path.string());
  for (const auto& [k, v] : header) out << k << ": " << v << '\n';
  out << kHeaderEnd << '\n';
  for (const Eigen::MatrixXd* a : arrays) {
    out.write(reinterpret_cast<const char*>(a->data()),
              static_cast<std::streamsize>(sizeof(double) * static_cast<std::size_t>(a->size())));
  }
  if (!out) throw ConfigurationError("write failed for " + path.string());
}

struct Container {
  Header header;
  std::vector<char> payload;
  std::size_t cursor = 0;

  const std::string& get(const std::string& key) const {
    auto it = header.find(key);
    if (it == header.end()) throw InvalidArgument("file header lacks '" + key + "'");
    return it->second;
  }

  Eigen::MatrixXd take(Eigen::Index rows, Eigen::Index cols) {
    const std::size_t bytes = sizeof(double) * static_cast<std::size_t>(rows * cols);
    if (cursor + bytes > payload.size()) throw InvalidArgument("file payload is truncated");
    Eigen::MatrixXd m(rows, cols);
    std::memcpy(m.data(), payload.data() + cursor, bytes);
    cursor += bytes;
    return m;
  }

  void finish() const {
    if (cursor != payload.size()) throw InvalidArgument("file payload has trailing bytes");
  }
};

inline Container read_container(const std::filesystem::path& path, const std::string& expected_format) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigurationError("cannot read " + path.string());
  Container c;
  std::string line;
  bool ended = false;
  while (std::getline(in, line)) {
    if (line == kHeaderEnd) {
      ended = true;
      break;
    }
    const auto colon = line.find(':');
    if (colon == std::string::npos) throw InvalidArgument("malformed header line: " + line);
    std::string value = line.substr(colon + 1);
    if (!value.empty() && value.front() == ' ') value.erase(0, 1);
    c.header[line.substr(0, colon)] = value;
  }
  if (!ended) throw InvalidArgument(path.string() + ": missing " + kHeaderEnd);
  if (c.get("format") != expected_format) {
    throw InvalidArgument(path.string() + ": expected format " + expected_format + ", found " + c.get("format"));
  }
  c.payload.assign(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
  return c;
}

inline std::string join(const std::vector<double>& v) {
  std::string s;
  for (std::size_t k = 0; k < v.size(); ++k) s += (k ? " " : "") + fmt(v[k]);
  return s;
}

inline std::vector<double> split_numbers(const std::string& s) {
  std::vector<double> v;
  std::stringstream ss(s);
  double d;
  while (ss >> d) v.push_back(d);
  return v;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Snapshot files: 2N x m column-major, moisture rows first.

inline constexpr const char* kSnapshotFormat = "dryobs-snapshots-1";

struct SnapshotFile {
  Grid grid;
  std::string material_id;
  std::vector<double> times;
  Eigen::MatrixXd states;  // 2N x m

  Trajectory trajectory() const {
    Trajectory t;
    t.times = times;
    for (Eigen::Index j = 0; j < states.cols(); ++j) t.states.push_back(states.col(j));
    return t;
  }

  SnapshotSet field(FieldId f) const {
    const Eigen::Index N = grid.cell_count();
    SnapshotSet s;
    s.field = f;
    s.matrix = f == FieldId::Moisture ? Eigen::MatrixXd(states.topRows(N)) : Eigen::MatrixXd(states.bottomRows(N));
    s.times = times;
    s.cell_volume = grid.cell_volume();
    return s;
  }
};

inline void write_snapshots(const std::filesystem::path& path, const Grid& g, const std::string& material_id,
                            const Trajectory& tr) {
  Eigen::MatrixXd M(2 * g.cell_count(), static_cast<Eigen::Index>(tr.size()));
  for (std::size_t j = 0; j < tr.size(); ++j) M.col(static_cast<Eigen::Index>(j)) = tr.states[j];
  detail::write_container(path,
                          {{"format", kSnapshotFormat},
                           {"grid", std::to_string(g.nx()) + " " + std::to_string(g.ny()) + " " + std::to_string(g.nz())},
                           {"cell_size", fmt(g.cell_size())},
                           {"fiber_axis", axis_label(g.fiber_axis())},
                           {"layout", "moisture rows 0..N-1, temperature rows N..2N-1, column-major float64"},
                           {"material", material_id},
                           {"rows", std::to_string(M.rows())},
                           {"columns", std::to_string(M.cols())},
                           {"times", detail::join(tr.times)}},
                          {&M});
}

inline SnapshotFile read_snapshots(const std::filesystem::path& path) {
  auto c = detail::read_container(path, kSnapshotFormat);
  std::stringstream dims(c.get("grid"));
  int nx = 0, ny = 0, nz = 0;
  dims >> nx >> ny >> nz;
  SnapshotFile f{Grid(nx, ny, nz, std::stod(c.get("cell_size")), parse_axis(c.get("fiber_axis"))), c.get("material"),
                 detail::split_numbers(c.get("times")), {}};
  const Eigen::Index rows = std::stol(c.get("rows"));
  const Eigen::Index cols = std::stol(c.get("columns"));
  if (rows != 2 * f.grid.cell_count()) throw DimensionError(path.string() + ": row count does not match grid");
  if (static_cast<Eigen::Index>(f.times.size()) != cols) throw DimensionError(path.string() + ": times/columns mismatch");
  f.states = c.take(rows, cols);
  c.finish();
  return f;
}

/// Debug export: one row per cell (moisture then temperature), one column per time.
inline void export_snapshots_csv(const std::filesystem::path& path, const SnapshotFile& f) {
  CsvWriter w(path);
  std::vector<std::string> head{"row"};
  for (double t : f.times) head.push_back("t=" + fmt(t));
  w.header(head);
  for (Eigen::Index r = 0; r < f.states.rows(); ++r) {
    std::vector<double> v{static_cast<double>(r)};
    for (Eigen::Index j = 0; j < f.states.cols(); ++j) v.push_back(f.states(r, j));
    w.row(v);
  }
}

// ---------------------------------------------------------------------------
// Basis files: both fields, all nonzero modes, cutoffs in the header.

inline constexpr const char* kBasisFormat = "dryobs-basis-1";

struct BasisFile {
  PodBasis moisture;
  PodBasis temperature;
  std::uint64_t grid_fingerprint = 0;
};

inline void write_basis(const std::filesystem::path& path, const PodBasis& px, const PodBasis& pT,
                        std::uint64_t grid_fingerprint) {
  if (px.size() != pT.size()) throw DimensionError("bases have different cell counts");
  const Eigen::MatrixXd means = (Eigen::MatrixXd(px.size(), 2) << px.mean, pT.mean).finished();
  const Eigen::MatrixXd sx = px.raw_spectrum, sT = pT.raw_spectrum;
  detail::write_container(path,
                          {{"format", kBasisFormat},
                           {"fields", "moisture temperature"},
                           {"cells", std::to_string(px.size())},
                           {"cell_volume", fmt(px.cell_volume)},
                           {"grid_fingerprint", std::to_string(grid_fingerprint)},
                           {"rank", std::to_string(px.rank()) + " " + std::to_string(pT.rank())},
                           {"cutoff", std::to_string(px.cutoff) + " " + std::to_string(pT.cutoff)},
                           {"spectrum_length", std::to_string(sx.size()) + " " + std::to_string(sT.size())},
                           {"layout", "means (N x 2), moisture modes (N x rank_x), temperature modes (N x rank_T), "
                                      "moisture spectrum, temperature spectrum; column-major float64"}},
                          {&means, &px.all_modes, &pT.all_modes, &sx, &sT});
}

inline BasisFile read_basis(const std::filesystem::path& path) {
  auto c = detail::read_container(path, kBasisFormat);
  const Eigen::Index N = std::stol(c.get("cells"));
  const double dV = std::stod(c.get("cell_volume"));
  const auto rank = detail::split_numbers(c.get("rank"));
  const auto cut = detail::split_numbers(c.get("cutoff"));
  const auto len = detail::split_numbers(c.get("spectrum_length"));
  if (rank.size() != 2 || cut.size() != 2 || len.size() != 2) throw InvalidArgument("malformed basis header");
  BasisFile f;
  f.grid_fingerprint = std::stoull(c.get("grid_fingerprint"));
  const Eigen::MatrixXd means = c.take(N, 2);
  PodBasis* parts[2] = {&f.moisture, &f.temperature};
  for (int p = 0; p < 2; ++p) {
    parts[p]->field = p == 0 ? FieldId::Moisture : FieldId::Temperature;
    parts[p]->mean = means.col(p);
    parts[p]->cell_volume = dV;
    parts[p]->all_modes = c.take(N, static_cast<Eigen::Index>(rank[p]));
    parts[p]->cutoff = static_cast<int>(cut[p]);
    if (parts[p]->cutoff < 0 || parts[p]->cutoff > parts[p]->all_modes.cols()) {
      throw InvalidArgument("basis cutoff exceeds stored rank");
    }
  }
  for (int p = 0; p < 2; ++p) {
    parts[p]->raw_spectrum = c.take(static_cast<Eigen::Index>(len[p]), 1);
    parts[p]->singular_values = parts[p]->raw_spectrum.head(parts[p]->all_modes.cols());
  }
  c.finish();
  return f;
}

}  // namespace dryobs::io

#include "tubeflow/io.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include <json.hpp>

namespace tubeflow::io {

namespace {

using nlohmann::json;

json parse_json_file(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw SpecError("cannot open " + file.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw SpecError("malformed JSON in " + file.string() + ": " + e.what());
  }
}

double number_param(const json& params, const std::string& key,
                    double fallback) {
  if (!params.contains(key)) return fallback;
  if (!params.at(key).is_number())
    throw SpecError("spec parameter '" + key + "' must be a number");
  return params.at(key).get<double>();
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::stringstream ss(line);
  while (std::getline(ss, cell, ',')) {
    size_t a = cell.find_first_not_of(" \t\r");
    size_t b = cell.find_last_not_of(" \t\r");
    out.push_back(a == std::string::npos ? "" : cell.substr(a, b - a + 1));
  }
  return out;
}

double parse_number(const std::string& cell, const std::string& where) {
  try {
    size_t used = 0;
    double v = std::stod(cell, &used);
    if (used != cell.size()) throw std::invalid_argument(cell);
    return v;
  } catch (const std::exception&) {
    throw SpecError("bad numeric cell '" + cell + "' in " + where);
  }
}

std::vector<std::vector<double>> read_csv_rows(
    const std::filesystem::path& file, size_t* header_cols) {
  std::ifstream in(file);
  if (!in) throw SpecError("cannot open " + file.string());
  std::string line;
  if (!std::getline(in, line))
    throw SpecError("missing header row in " + file.string());
  *header_cols = split_csv(line).size();
  std::vector<std::vector<double>> rows;
  while (std::getline(in, line)) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    std::vector<std::string> cells = split_csv(line);
    if (cells.size() != *header_cols)
      throw SpecError("ragged row in " + file.string());
    std::vector<double> row;
    row.reserve(cells.size());
    for (const std::string& c : cells)
      row.push_back(parse_number(c, file.string()));
    rows.push_back(std::move(row));
  }
  return rows;
}

std::vector<Axis> axes_from_params(const json& params) {
  if (!params.contains("axes") || !params.at("axes").is_array())
    throw SpecError("sampled family requires an 'axes' array");
  std::vector<Axis> axes;
  for (const json& a : params.at("axes")) {
    Axis ax;
    ax.lo = a.at("lo").get<double>();
    ax.hi = a.at("hi").get<double>();
    ax.periodic = a.value("periodic", false);
    axes.push_back(ax);
  }
  return axes;
}

}  // namespace

ChartedManifold load_manifold_spec(const std::filesystem::path& file,
                                   const std::vector<int>& grid_override) {
  json j = parse_json_file(file);
  if (!j.is_object() || !j.contains("family"))
    throw SpecError("manifold spec needs a 'family' field: " + file.string());
  std::string family = j.at("family").get<std::string>();
  json params = j.value("params", json::object());

  std::vector<int> grid = grid_override;
  if (grid.empty()) {
    if (!j.contains("grid") || !j.at("grid").is_array())
      throw SpecError("manifold spec needs a 'grid' array: " + file.string());
    for (const json& g : j.at("grid")) grid.push_back(g.get<int>());
  }

  ChartedManifold m = [&]() {
    if (family == "circle") {
      if (grid.size() != 1) throw SpecError("circle grid must be [n]");
      return ChartedManifold::circle(number_param(params, "radius", 1.0),
                                     grid[0], number_param(params, "cx", 0.0),
                                     number_param(params, "cy", 0.0));
    }
    if (family == "ellipse") {
      if (grid.size() != 1) throw SpecError("ellipse grid must be [n]");
      return ChartedManifold::ellipse(number_param(params, "a", 1.0),
                                      number_param(params, "b", 1.0), grid[0]);
    }
    if (family == "sphere") {
      if (grid.size() != 2) throw SpecError("sphere grid must be [nu, nv]");
      return ChartedManifold::sphere(number_param(params, "radius", 1.0),
                                     grid[0], grid[1],
                                     number_param(params, "pole_inset", 0.3));
    }
    if (family == "torus") {
      if (grid.size() != 2) throw SpecError("torus grid must be [nu, nv]");
      return ChartedManifold::torus(number_param(params, "ring_radius", 2.0),
                                    number_param(params, "tube_radius", 0.5),
                                    grid[0], grid[1]);
    }
    if (family == "graph") {
      if (!params.contains("field"))
        throw SpecError("graph family requires a 'field' name");
      if (!params.contains("box") || !params.at("box").is_array())
        throw SpecError("graph family requires a 'box' array of [lo, hi]");
      std::vector<Axis> box;
      for (const json& side : params.at("box")) {
        Axis ax;
        ax.lo = side.at(0).get<double>();
        ax.hi = side.at(1).get<double>();
        box.push_back(ax);
      }
      return ChartedManifold::graph(params.at("field").get<std::string>(), box,
                                    grid,
                                    number_param(params, "field_param", 1.0));
    }
    if (family == "sampled") {
      std::vector<Axis> axes = axes_from_params(params);
      GridShape shape(axes, grid);
      GridSamples gs;
      gs.shape = shape;
      if (params.contains("points_csv")) {
        std::filesystem::path csv =
            file.parent_path() /
            params.at("points_csv").get<std::string>();
        gs = load_snapshot_csv(csv, shape);
      } else if (params.contains("points")) {
        const json& pts = params.at("points");
        if (!pts.is_array() || static_cast<int>(pts.size()) != shape.total())
          throw SpecError("sampled points must list one row per grid node");
        int N = static_cast<int>(pts.at(0).size());
        gs.points = Mat(N, shape.total());
        for (int f = 0; f < shape.total(); ++f) {
          if (static_cast<int>(pts.at(f).size()) != N)
            throw SpecError("sampled points rows have inconsistent length");
          for (int p = 0; p < N; ++p)
            gs.points(p, f) = pts.at(f).at(p).get<double>();
        }
      } else {
        throw SpecError("sampled family requires 'points' or 'points_csv'");
      }
      return ChartedManifold::from_samples(std::move(gs));
    }
    throw SpecError("unknown manifold family '" + family + "'");
  }();

  if (j.contains("ambient_dim") &&
      j.at("ambient_dim").get<int>() != m.ambient_dim())
    throw SpecError("spec ambient_dim does not match the family");
  return m;
}

DataCloud load_cloud_csv(const std::filesystem::path& file, int ambient_dim) {
  size_t cols = 0;
  std::vector<std::vector<double>> rows = read_csv_rows(file, &cols);
  bool weighted = cols == static_cast<size_t>(ambient_dim) + 1;
  if (!weighted && cols != static_cast<size_t>(ambient_dim))
    throw SpecError("cloud CSV must have N or N+1 columns: " + file.string());
  if (rows.empty()) throw EmptyCloud("cloud CSV has no data rows");
  Mat points(ambient_dim, rows.size());
  Vec weights = weighted ? Vec(rows.size()) : Vec();
  for (size_t i = 0; i < rows.size(); ++i) {
    for (int p = 0; p < ambient_dim; ++p) points(p, i) = rows[i][p];
    if (weighted) weights[static_cast<int>(i)] = rows[i][ambient_dim];
  }
  return DataCloud::make(std::move(points), std::move(weights));
}

std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

namespace {

// JSON numbers cannot hold infinities; report them as null.
std::string json_number(double v) {
  return std::isfinite(v) ? format_double(v) : "null";
}

}  // namespace

void atomic_write(const std::filesystem::path& path,
                  const std::string& content) {
  if (path.has_parent_path())
    std::filesystem::create_directories(path.parent_path());
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::trunc);
    if (!out) throw SpecError("cannot write " + tmp.string());
    out << content;
  }
  std::filesystem::rename(tmp, path);
}

std::string per_point_csv(const TubeConstants& tc) {
  const int k = static_cast<int>(tc.bounds.sigma.size());
  std::ostringstream out;
  for (int j = 0; j < k; ++j) out << "u" << j << ",";
  out << "r,delta0,delta1,delta3,delta_point,det_DE\n";
  for (const TubeConstants::Row& row : tc.table) {
    for (int j = 0; j < k; ++j) out << format_double(row.u[j]) << ",";
    out << format_double(row.r) << "," << format_double(row.point.delta0)
        << "," << format_double(row.point.delta1) << ","
        << format_double(row.point.delta3) << ","
        << format_double(row.point.delta_point) << ","
        << format_double(row.point.det_DE) << "\n";
  }
  return out.str();
}

std::string analyze_report_json(const TubeConstants& tc,
                                const std::vector<int>& grid) {
  std::ostringstream out;
  out << "{\n"
      << "  \"schema_version\": " << kSchemaVersion << ",\n"
      << "  \"K\": " << json_number(tc.K) << ",\n"
      << "  \"K_inv\": " << json_number(tc.K_inv) << ",\n"
      << "  \"delta\": " << json_number(tc.delta) << ",\n"
      << "  \"epsilon\": " << json_number(tc.epsilon) << ",\n"
      << "  \"t_star\": " << json_number(tc.t_star) << ",\n"
      << "  \"grid\": [";
  for (size_t i = 0; i < grid.size(); ++i)
    out << (i ? ", " : "") << grid[i];
  out << "],\n"
      << "  \"per_point\": \"per_point.csv\"\n"
      << "}\n";
  return out.str();
}

std::string gradient_field_csv(const ChartedManifold& m,
                               const GradientField& field) {
  const GridShape& shape = m.shape();
  const int k = shape.rank();
  const int N = m.ambient_dim();
  std::ostringstream out;
  for (int j = 0; j < k; ++j) out << "u" << j << ",";
  for (int p = 0; p < N; ++p) out << "Z" << p << ",";
  out << "tangential_norm,normal_norm\n";
  for (int f = 0; f < shape.total(); ++f) {
    Vec u = shape.node(f);
    for (int j = 0; j < k; ++j) out << format_double(u[j]) << ",";
    for (int p = 0; p < N; ++p) out << format_double(field.Z(p, f)) << ",";
    out << format_double(field.tangential_norm[f]) << ","
        << format_double(field.normal_norm[f]) << "\n";
  }
  return out.str();
}

std::string frame_field_csv(const ChartedManifold& m,
                            const FrameField& frames) {
  const GridShape& shape = m.shape();
  const int k = shape.rank();
  const int N = m.ambient_dim();
  const int codim = N - k;
  std::ostringstream out;
  for (int j = 0; j < k; ++j) out << "u" << j << ",";
  for (int i = 0; i < codim; ++i)
    for (int p = 0; p < N; ++p)
      out << "w" << i << "_" << p << (i == codim - 1 && p == N - 1 ? "" : ",");
  out << "\n";
  for (int f = 0; f < shape.total(); ++f) {
    Vec u = shape.node(f);
    for (int j = 0; j < k; ++j) out << format_double(u[j]) << ",";
    const Mat& W = frames.frame(f);
    for (int i = 0; i < codim; ++i)
      for (int p = 0; p < N; ++p)
        out << format_double(W(p, i))
            << (i == codim - 1 && p == N - 1 ? "" : ",");
    out << "\n";
  }
  return out.str();
}

std::string snapshot_csv(const GridShape& shape, const GridSamples& gs) {
  if (gs.count() != shape.total())
    throw SpecError("snapshot CSV: sample count does not match the grid");
  const int k = shape.rank();
  const int N = gs.ambient_dim();
  std::ostringstream out;
  for (int j = 0; j < k; ++j) out << "u" << j << ",";
  for (int p = 0; p < N; ++p) out << "x" << p << (p == N - 1 ? "" : ",");
  out << "\n";
  for (int f = 0; f < shape.total(); ++f) {
    Vec u = shape.node(f);
    for (int j = 0; j < k; ++j) out << format_double(u[j]) << ",";
    for (int p = 0; p < N; ++p)
      out << format_double(gs.points(p, f)) << (p == N - 1 ? "" : ",");
    out << "\n";
  }
  return out.str();
}

GridSamples load_snapshot_csv(const std::filesystem::path& file,
                              const GridShape& shape) {
  size_t cols = 0;
  std::vector<std::vector<double>> rows = read_csv_rows(file, &cols);
  const int k = shape.rank();
  if (cols <= static_cast<size_t>(k))
    throw SpecError("snapshot CSV needs ambient columns after the u columns");
  const int N = static_cast<int>(cols) - k;
  if (static_cast<int>(rows.size()) != shape.total())
    throw SpecError("snapshot CSV row count does not match the grid");
  GridSamples gs;
  gs.shape = shape;
  gs.points = Mat(N, shape.total());
  for (int f = 0; f < shape.total(); ++f)
    for (int p = 0; p < N; ++p) gs.points(p, f) = rows[f][k + p];
  return gs;
}

}  // namespace tubeflow::io

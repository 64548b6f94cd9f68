#include "arraygp/io.hpp"

#include <charconv>
#include <cctype>
#include <fstream>
#include <sstream>

#include "arraygp/version.hpp"

namespace arraygp::io {

namespace {

[[noreturn]] void fail(const std::string& msg) { throw std::invalid_argument(msg); }

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail("cannot open file: " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

std::vector<std::string> split(const std::string& line, char sep) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == sep) {
      out.push_back(cur);
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  out.push_back(cur);
  return out;
}

std::string trim(const std::string& s) {
  std::size_t a = 0, b = s.size();
  while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
  while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
  return s.substr(a, b - a);
}

double to_double(const std::string& s, const std::string& what) {
  const std::string t = trim(s);
  double v = 0;
  const auto* begin = t.data();
  const auto* end = t.data() + t.size();
  auto [ptr, ec] = std::from_chars(begin, end, v);
  if (ec != std::errc() || ptr != end) fail("cannot parse number '" + t + "' in " + what);
  return v;
}

int to_int(const std::string& s, const std::string& what) {
  const double v = to_double(s, what);
  return static_cast<int>(v);
}

MatrixX<double> sigma_from_json(const json& j, int dimension) {
  const auto d = static_cast<Eigen::Index>(dimension);
  if (j.is_number()) {
    return MatrixX<double>::Identity(d, d) * j.get<double>();
  }
  if (j.is_array() && !j.empty() && j.front().is_number()) {
    if (static_cast<Eigen::Index>(j.size()) != d) fail("sigma_x diagonal length differs from dimension");
    MatrixX<double> S = MatrixX<double>::Zero(d, d);
    for (Eigen::Index i = 0; i < d; ++i) S(i, i) = j[static_cast<std::size_t>(i)].get<double>();
    return S;
  }
  if (j.is_array()) {
    if (static_cast<Eigen::Index>(j.size()) != d) fail("sigma_x matrix shape differs from dimension");
    MatrixX<double> S(d, d);
    for (Eigen::Index i = 0; i < d; ++i) {
      const auto& row = j[static_cast<std::size_t>(i)];
      if (static_cast<Eigen::Index>(row.size()) != d) fail("sigma_x matrix is not square");
      for (Eigen::Index k = 0; k < d; ++k) S(i, k) = row[static_cast<std::size_t>(k)].get<double>();
    }
    return S;
  }
  fail("sigma_x must be a scalar, a diagonal or a matrix");
}

json matrix_to_json(const MatrixX<double>& M) {
  json rows = json::array();
  for (Eigen::Index i = 0; i < M.rows(); ++i) {
    json row = json::array();
    for (Eigen::Index j = 0; j < M.cols(); ++j) row.push_back(M(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

MatrixX<double> matrix_from_json(const json& j) {
  const auto rows = static_cast<Eigen::Index>(j.size());
  const auto cols = rows > 0 ? static_cast<Eigen::Index>(j.front().size()) : 0;
  MatrixX<double> M(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i) {
    for (Eigen::Index k = 0; k < cols; ++k) {
      M(i, k) = j[static_cast<std::size_t>(i)][static_cast<std::size_t>(k)].get<double>();
    }
  }
  return M;
}

}  // namespace

std::string format_double(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

void atomic_write(const std::filesystem::path& path, const std::string& content) {
  if (path.has_parent_path()) {
    std::filesystem::create_directories(path.parent_path());
  }
  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) fail("cannot write file: " + tmp.string());
    out << content;
  }
  std::filesystem::rename(tmp, path);
}

Csv read_csv(const std::filesystem::path& path) {
  const std::string text = read_file(path);
  Csv csv;
  std::istringstream in(text);
  std::string line;
  bool first = true;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (trim(line).empty()) continue;
    auto fields = split(line, ',');
    for (auto& f : fields) f = trim(f);
    if (first) {
      csv.header = std::move(fields);
      first = false;
    } else {
      if (fields.size() != csv.header.size()) {
        fail("malformed CSV row in " + path.string());
      }
      csv.rows.push_back(std::move(fields));
    }
  }
  if (first) fail("empty CSV file: " + path.string());
  return csv;
}

std::string to_text(const Csv& csv) {
  std::ostringstream out;
  for (std::size_t i = 0; i < csv.header.size(); ++i) {
    if (i) out << ',';
    out << csv.header[i];
  }
  out << '\n';
  for (const auto& row : csv.rows) {
    for (std::size_t i = 0; i < row.size(); ++i) {
      if (i) out << ',';
      out << row[i];
    }
    out << '\n';
  }
  return out.str();
}

namespace {

// Parses a single config value: quoted string, [ ... ] array (possibly
// nested), boolean, or number.
json parse_value(const std::string& text, const std::string& key);

json parse_array(const std::string& text, const std::string& key) {
  json arr = json::array();
  int depth = 0;
  std::string cur;
  // text excludes the outer brackets
  for (char c : text) {
    if (c == '[') ++depth;
    if (c == ']') --depth;
    if (c == ',' && depth == 0) {
      if (!trim(cur).empty()) arr.push_back(parse_value(trim(cur), key));
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  if (!trim(cur).empty()) arr.push_back(parse_value(trim(cur), key));
  return arr;
}

json parse_value(const std::string& text, const std::string& key) {
  if (text.size() >= 2 && text.front() == '"' && text.back() == '"') {
    return text.substr(1, text.size() - 2);
  }
  if (text.front() == '[') {
    if (text.back() != ']') fail("unterminated array for key '" + key + "'");
    return parse_array(text.substr(1, text.size() - 2), key);
  }
  if (text == "true") return true;
  if (text == "false") return false;
  return to_double(text, "config key '" + key + "'");
}

}  // namespace

json parse_config_text(const std::string& text) {
  json obj = json::object();
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    bool in_quote = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
      if (line[i] == '"') in_quote = !in_quote;
      if (line[i] == '#' && !in_quote) {
        line = line.substr(0, i);
        break;
      }
    }
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) fail("config line without '=': " + line);
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty() || value.empty()) fail("malformed config line: " + line);
    obj[key] = parse_value(value, key);
  }
  return obj;
}

json load_config(const std::filesystem::path& path) {
  const std::string text = read_file(path);
  if (path.extension() == ".json") {
    json j = json::parse(text, nullptr, true, true);
    if (!j.is_object()) fail("config root must be an object: " + path.string());
    return j;
  }
  return parse_config_text(text);
}

Method parse_method(const std::string& name) {
  if (name == "GP") return Method::GP;
  if (name == "NIGP") return Method::NIGP;
  if (name == "ArrayNIGP") return Method::ArrayNIGP;
  fail("unknown method '" + name + "' (expected GP, NIGP or ArrayNIGP)");
}

NormMode parse_norm_mode(const std::string& name) {
  if (name == "squared") return NormMode::SquaredNorm;
  if (name == "norm") return NormMode::Norm;
  fail("unknown norm mode '" + name + "' (expected squared or norm)");
}

MatrixX<double> parse_grid_spec(const std::string& spec, int dimension) {
  const auto axes = split(spec, ';');
  if (static_cast<int>(axes.size()) != dimension) {
    fail("grid spec has " + std::to_string(axes.size()) + " axes, expected " +
         std::to_string(dimension));
  }
  std::vector<VectorX<double>> points;
  Eigen::Index total = 1;
  for (const auto& axis : axes) {
    const auto parts = split(axis, ':');
    if (parts.size() != 3) fail("grid axis must be lo:hi:count, got '" + axis + "'");
    const double lo = to_double(parts[0], "grid spec");
    const double hi = to_double(parts[1], "grid spec");
    const int count = to_int(parts[2], "grid spec");
    if (count < 1) fail("grid axis count must be positive");
    VectorX<double> v(count);
    if (count == 1) {
      v[0] = (lo + hi) / 2.0;
    } else {
      for (int i = 0; i < count; ++i) v[i] = lo + (hi - lo) * double(i) / double(count - 1);
    }
    points.push_back(std::move(v));
    total *= points.back().size();
  }
  MatrixX<double> grid(dimension, total);
  for (Eigen::Index p = 0; p < total; ++p) {
    Eigen::Index rem = p;
    for (int a = 0; a < dimension; ++a) {
      grid(a, p) = points[static_cast<std::size_t>(a)][rem % points[static_cast<std::size_t>(a)].size()];
      rem /= points[static_cast<std::size_t>(a)].size();
    }
  }
  return grid;
}

json config_json(const experiments::ScenarioConfig& cfg) {
  json j;
  j["dimension"] = cfg.dimension;
  json domain = json::array();
  for (const auto& [lo, hi] : cfg.domain) domain.push_back(json::array({lo, hi}));
  j["domain"] = std::move(domain);
  j["array_centers"] = cfg.array_centers;
  j["sensors_per_array"] = cfg.sensors_per_array;
  j["array_length"] = cfg.array_length;
  j["length_scale"] = cfg.hyper.length_scale;
  j["signal_variance"] = cfg.hyper.signal_variance;
  j["noise_variance"] = cfg.hyper.noise_variance;
  j["sigma_x"] = matrix_to_json(cfg.sigma_x);
  j["mc_runs"] = cfg.mc_runs;
  j["seed"] = cfg.seed;
  json methods = json::array();
  for (Method m : cfg.methods) methods.push_back(to_string(m));
  j["methods"] = std::move(methods);
  j["grid_resolution"] = cfg.grid_resolution;
  j["delta_epsilon"] = cfg.delta_epsilon;
  j["max_iter"] = cfg.max_iter;
  j["input_error"] = cfg.input_error;
  j["threads"] = cfg.threads;
  return j;
}

experiments::ScenarioConfig scenario_from_json(const json& j,
                                               const experiments::ScenarioConfig& defaults) {
  experiments::ScenarioConfig cfg = defaults;
  if (j.contains("dimension")) cfg.dimension = j["dimension"].get<int>();
  if (j.contains("domain")) {
    cfg.domain.clear();
    const auto& dom = j["domain"];
    if (!dom.empty() && dom.front().is_number()) {
      if (dom.size() != 2) fail("flat domain must be [lo, hi]");
      cfg.domain.emplace_back(dom[0].get<double>(), dom[1].get<double>());
    } else {
      for (const auto& axis : dom) {
        if (axis.size() != 2) fail("domain axis must be [lo, hi]");
        cfg.domain.emplace_back(axis[0].get<double>(), axis[1].get<double>());
      }
    }
  }
  if (j.contains("array_centers")) cfg.array_centers = j["array_centers"].get<int>();
  if (j.contains("sensors_per_array")) cfg.sensors_per_array = j["sensors_per_array"].get<int>();
  if (j.contains("array_length")) cfg.array_length = j["array_length"].get<double>();
  {
    double l = cfg.hyper.length_scale;
    double sf2 = cfg.hyper.signal_variance;
    double sy2 = cfg.hyper.noise_variance;
    if (j.contains("length_scale")) l = j["length_scale"].get<double>();
    if (j.contains("signal_variance")) sf2 = j["signal_variance"].get<double>();
    if (j.contains("noise_variance")) sy2 = j["noise_variance"].get<double>();
    cfg.hyper = Hyperparameters<double>(l, sf2, sy2);
  }
  if (cfg.dimension < 1 || cfg.dimension > 3) fail("dimension must be 1, 2 or 3");
  while (static_cast<int>(cfg.domain.size()) < cfg.dimension) {
    cfg.domain.push_back(cfg.domain.empty() ? std::make_pair(0.0, 5.0) : cfg.domain.back());
  }
  if (j.contains("sigma_x")) cfg.sigma_x = sigma_from_json(j["sigma_x"], cfg.dimension);
  if (cfg.sigma_x.rows() != cfg.dimension) {
    cfg.sigma_x = sigma_from_json(json(cfg.sigma_x(0, 0)), cfg.dimension);
  }
  if (j.contains("mc_runs")) cfg.mc_runs = j["mc_runs"].get<int>();
  if (j.contains("seed")) cfg.seed = j["seed"].get<std::uint64_t>();
  if (j.contains("methods")) {
    cfg.methods.clear();
    for (const auto& name : j["methods"]) cfg.methods.push_back(parse_method(name.get<std::string>()));
    if (cfg.methods.empty()) fail("methods must not be empty");
  }
  if (j.contains("grid_resolution")) cfg.grid_resolution = j["grid_resolution"].get<int>();
  if (j.contains("delta_epsilon")) cfg.delta_epsilon = j["delta_epsilon"].get<double>();
  if (j.contains("max_iter")) cfg.max_iter = j["max_iter"].get<int>();
  if (j.contains("input_error")) cfg.input_error = j["input_error"].get<double>();
  if (j.contains("threads")) cfg.threads = j["threads"].get<int>();
  return cfg;
}

namespace {

json record_json(const experiments::RunRecord& r) {
  json j;
  j["run"] = r.run;
  j["method"] = to_string(r.method);
  j["rmse"] = r.rmse;
  j["mean_variance"] = r.mean_variance;
  j["iterations"] = r.iterations;
  j["converged"] = r.converged;
  j["final_epsilon"] = r.final_epsilon;
  j["jittered"] = r.jittered;
  j["min_variance_raw"] = r.min_variance_raw;
  return j;
}

}  // namespace

std::string sweep_csv(const experiments::SweepResult& result) {
  std::ostringstream out;
  out << "value,method,mean_rmse,std_rmse,mean_var,std_var\n";
  for (const auto& cell : result.cells) {
    for (const auto& agg : cell.aggregates) {
      out << format_double(cell.value) << ',' << to_string(agg.method) << ','
          << format_double(agg.mean_rmse) << ',' << format_double(agg.std_rmse) << ','
          << format_double(agg.mean_variance) << ',' << format_double(agg.std_variance)
          << '\n';
    }
  }
  return out.str();
}

json sweep_json(const experiments::SweepResult& result, const std::vector<double>& values) {
  json j;
  j["kind"] = result.kind;
  j["generator_version"] = kVersion;
  j["config"] = config_json(result.config);
  j["values"] = values;
  json cells = json::array();
  for (const auto& cell : result.cells) {
    json cj;
    cj["value"] = cell.value;
    json aggs = json::array();
    for (const auto& agg : cell.aggregates) {
      json a;
      a["method"] = to_string(agg.method);
      a["mean_rmse"] = agg.mean_rmse;
      a["std_rmse"] = agg.std_rmse;
      a["mean_var"] = agg.mean_variance;
      a["std_var"] = agg.std_variance;
      aggs.push_back(std::move(a));
    }
    cj["aggregates"] = std::move(aggs);
    json runs = json::array();
    for (const auto& r : cell.runs) runs.push_back(record_json(r));
    cj["runs"] = std::move(runs);
    if (!cell.baseline_runs.empty()) {
      json base = json::array();
      for (const auto& r : cell.baseline_runs) base.push_back(record_json(r));
      cj["baseline_runs"] = std::move(base);
    }
    cells.push_back(std::move(cj));
  }
  j["cells"] = std::move(cells);
  return j;
}

ArrayGeometry<double> read_geometry(const std::filesystem::path& path) {
  const json j = json::parse(read_file(path));
  if (!j.contains("dimension") || !j.contains("offsets")) {
    fail("geometry file must contain 'dimension' and 'offsets': " + path.string());
  }
  const int d = j["dimension"].get<int>();
  if (d < 1 || d > 3) fail("geometry dimension must be 1, 2 or 3");
  const auto& offs = j["offsets"];
  if (offs.empty()) fail("geometry must list at least one offset");
  MatrixX<double> offsets(d, static_cast<Eigen::Index>(offs.size()));
  for (std::size_t i = 0; i < offs.size(); ++i) {
    if (static_cast<int>(offs[i].size()) != d) fail("geometry offset dimension mismatch");
    for (int k = 0; k < d; ++k) offsets(k, static_cast<Eigen::Index>(i)) = offs[i][static_cast<std::size_t>(k)].get<double>();
  }
  return ArrayGeometry<double>(offsets);
}

std::map<int, SensorCalibration<double>> read_calibration(const std::filesystem::path& path) {
  const json j = json::parse(read_file(path));
  if (!j.is_array()) fail("calibration file must be a JSON array: " + path.string());
  std::map<int, SensorCalibration<double>> cal;
  for (const auto& entry : j) {
    const int id = entry.at("sensor_id").get<int>();
    const auto& D = entry.at("D");
    const auto& b = entry.at("b");
    if (D.size() != 9 || b.size() != 3) fail("calibration entry needs 9 D values and 3 b values");
    SensorCalibration<double> c;
    for (int r = 0; r < 3; ++r) {
      for (int k = 0; k < 3; ++k) c.distortion(r, k) = D[static_cast<std::size_t>(3 * r + k)].get<double>();
    }
    for (int k = 0; k < 3; ++k) c.bias(k) = b[static_cast<std::size_t>(k)].get<double>();
    cal[id] = c;
  }
  return cal;
}

RawLog read_raw_log(const std::filesystem::path& path) {
  const Csv csv = read_csv(path);
  if (csv.header != std::vector<std::string>{"t", "sensor_id", "mx", "my", "mz"}) {
    fail("raw log must have header t,sensor_id,mx,my,mz: " + path.string());
  }
  RawLog log;
  for (const auto& row : csv.rows) {
    log.t.push_back(to_double(row[0], "raw log"));
    log.sensor_id.push_back(to_int(row[1], "raw log"));
    log.field.emplace_back(to_double(row[2], "raw log"), to_double(row[3], "raw log"),
                           to_double(row[4], "raw log"));
  }
  return log;
}

MeasurementLog read_measurements(const std::filesystem::path& path) {
  const Csv csv = read_csv(path);
  if (csv.header != std::vector<std::string>{"t", "sensor_id", "y"}) {
    fail("measurement log must have header t,sensor_id,y: " + path.string());
  }
  MeasurementLog log;
  for (const auto& row : csv.rows) {
    log.t.push_back(to_double(row[0], "measurements"));
    log.sensor_id.push_back(to_int(row[1], "measurements"));
    log.y.push_back(to_double(row[2], "measurements"));
  }
  return log;
}

PoseLog read_poses(const std::filesystem::path& path, int dimension) {
  const Csv csv = read_csv(path);
  const std::vector<std::string> expected =
      dimension == 1 ? std::vector<std::string>{"t", "px"}
      : dimension == 2
          ? std::vector<std::string>{"t", "px", "py", "theta"}
          : std::vector<std::string>{"t", "px", "py", "pz", "qw", "qx", "qy", "qz"};
  if (csv.header != expected) {
    std::string want;
    for (std::size_t i = 0; i < expected.size(); ++i) want += (i ? "," : "") + expected[i];
    fail("pose log for dimension " + std::to_string(dimension) + " must have header " +
         want + ": " + path.string());
  }
  PoseLog log;
  for (const auto& row : csv.rows) {
    log.t.push_back(to_double(row[0], "poses"));
    if (dimension == 1) {
      log.poses.emplace_back(VectorX<double>::Constant(1, to_double(row[1], "poses")),
                             MatrixX<double>::Identity(1, 1));
    } else if (dimension == 2) {
      VectorX<double> c(2);
      c << to_double(row[1], "poses"), to_double(row[2], "poses");
      const double theta = to_double(row[3], "poses");
      MatrixX<double> R(2, 2);
      R << std::cos(theta), -std::sin(theta), std::sin(theta), std::cos(theta);
      log.poses.emplace_back(c, R);
    } else {
      VectorX<double> c(3);
      c << to_double(row[1], "poses"), to_double(row[2], "poses"), to_double(row[3], "poses");
      Eigen::Quaterniond q(to_double(row[4], "poses"), to_double(row[5], "poses"),
                           to_double(row[6], "poses"), to_double(row[7], "poses"));
      if (q.norm() <= 0) fail("zero quaternion in pose log");
      q.normalize();
      log.poses.emplace_back(c, MatrixX<double>(q.toRotationMatrix()));
    }
  }
  return log;
}

json report_json(const IterationReport<double>& report) {
  json j;
  j["iterations"] = report.iterations;
  j["converged"] = report.converged;
  j["delta_epsilon"] = report.delta_epsilon;
  j["epsilon_history"] = report.epsilon_history;
  return j;
}

json model_json(const MapModel& model) {
  json j;
  j["format_version"] = 1;
  j["generator_version"] = kVersion;
  j["method"] = to_string(model.method);
  j["hyperparameters"] = {{"length_scale", model.hyper.length_scale},
                          {"signal_variance", model.hyper.signal_variance},
                          {"noise_variance", model.hyper.noise_variance}};
  j["output_mean"] = model.train.output_mean;
  j["norm_mode"] = to_string(model.norm_mode);
  j["noise"] = {{"structure", "ArrayCorrelated"}, {"sigma_x", matrix_to_json(model.sigma_x)}};
  j["delta_epsilon"] = model.delta_epsilon;
  j["max_iter"] = model.max_iter;
  json inputs = json::array();
  for (Eigen::Index i = 0; i < model.train.size(); ++i) {
    json p = json::array();
    for (Eigen::Index k = 0; k < model.train.dim(); ++k) p.push_back(model.train.inputs(k, i));
    inputs.push_back(std::move(p));
  }
  j["inputs"] = std::move(inputs);
  j["outputs"] = std::vector<double>(model.train.outputs.data(),
                                     model.train.outputs.data() + model.train.outputs.size());
  json groups = json::array();
  for (const auto& g : model.train.groups) {
    json gj = json::array();
    for (Eigen::Index idx : g) gj.push_back(idx);
    groups.push_back(std::move(gj));
  }
  j["groups"] = std::move(groups);
  json blocks = json::array();
  for (const auto& B : model.noise_term.blocks) blocks.push_back(matrix_to_json(B));
  j["sigma_blocks"] = std::move(blocks);
  j["report"] = report_json(model.report);
  return j;
}

MapModel read_model(const std::filesystem::path& path) {
  const json j = json::parse(read_file(path));
  if (!j.contains("format_version") || j["format_version"].get<int>() != 1) {
    fail("unsupported model format version in " + path.string());
  }
  MapModel model;
  const auto& h = j.at("hyperparameters");
  model.hyper = Hyperparameters<double>(h.at("length_scale").get<double>(),
                                        h.at("signal_variance").get<double>(),
                                        h.at("noise_variance").get<double>());
  model.method = parse_method(j.at("method").get<std::string>());
  model.norm_mode = parse_norm_mode(j.at("norm_mode").get<std::string>());
  model.sigma_x = matrix_from_json(j.at("noise").at("sigma_x"));
  model.delta_epsilon = j.at("delta_epsilon").get<double>();
  model.max_iter = j.at("max_iter").get<int>();

  const auto& inputs = j.at("inputs");
  const auto n = static_cast<Eigen::Index>(inputs.size());
  if (n == 0) fail("model has no training inputs");
  const auto d = static_cast<Eigen::Index>(inputs.front().size());
  model.train.inputs.resize(d, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index k = 0; k < d; ++k) {
      model.train.inputs(k, i) = inputs[static_cast<std::size_t>(i)][static_cast<std::size_t>(k)].get<double>();
    }
  }
  const auto outputs = j.at("outputs").get<std::vector<double>>();
  model.train.outputs = Eigen::Map<const VectorX<double>>(outputs.data(),
                                                          static_cast<Eigen::Index>(outputs.size()));
  model.train.output_mean = j.at("output_mean").get<double>();
  for (const auto& g : j.at("groups")) {
    std::vector<Eigen::Index> idx;
    for (const auto& v : g) idx.push_back(v.get<Eigen::Index>());
    model.train.groups.push_back(std::move(idx));
  }
  model.noise_term.groups = model.train.groups;
  model.noise_term.n = n;
  for (const auto& B : j.at("sigma_blocks")) {
    model.noise_term.blocks.push_back(matrix_from_json(B));
  }
  if (model.noise_term.blocks.size() != model.train.groups.size()) {
    fail("model sigma_blocks do not match groups");
  }
  const auto& rep = j.at("report");
  model.report.iterations = rep.at("iterations").get<int>();
  model.report.converged = rep.at("converged").get<bool>();
  model.report.delta_epsilon = rep.at("delta_epsilon").get<double>();
  model.report.epsilon_history = rep.at("epsilon_history").get<std::vector<double>>();
  return model;
}

}  // namespace arraygp::io

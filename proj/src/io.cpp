#include "lvdfm/io.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

#include <fmt/format.h>
#include <openssl/evp.h>

namespace lvdfm {

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  bool quoted = false;
  for (char ch : line) {
    if (ch == '"') quoted = !quoted;
    else if (ch == ',' && !quoted) {
      out.push_back(cur);
      cur.clear();
    } else if (ch != '\r') cur.push_back(ch);
  }
  out.push_back(cur);
  for (auto& s : out) {
    const auto b = s.find_first_not_of(" \t");
    const auto e = s.find_last_not_of(" \t");
    s = b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
  }
  return out;
}

bool parse_number(const std::string& s, double& out) {
  if (s.empty() || s == "NA" || s == "NaN" || s == "nan" || s == ".") return false;
  char* end = nullptr;
  out = std::strtod(s.c_str(), &end);
  if (end != s.c_str() + s.size()) throw Error("not a number: '" + s + "'");
  return std::isfinite(out);
}

Json matrix_shape(const MatrixXd& m) { return Json::array({m.rows(), m.cols()}); }

// One row per stored draw, column-major flattening.
std::string stack_rows(const std::vector<const MatrixXd*>& mats) {
  std::string out;
  for (const MatrixXd* m : mats) {
    const double* p = m->data();
    for (Eigen::Index k = 0; k < m->size(); ++k) {
      if (k) out += ',';
      out += format_double(p[k]);
    }
    out += '\n';
  }
  return out;
}

std::vector<MatrixXd> unstack_rows(const std::string& content, Eigen::Index rows, Eigen::Index cols) {
  std::vector<MatrixXd> out;
  std::istringstream in(content);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto cells = split_csv_line(line);
    if (static_cast<Eigen::Index>(cells.size()) != rows * cols) throw Error("corrupt archive: bad row length");
    MatrixXd m(rows, cols);
    for (Eigen::Index k = 0; k < rows * cols; ++k) m.data()[k] = std::strtod(cells[k].c_str(), nullptr);
    out.push_back(std::move(m));
  }
  return out;
}

Json mask_json(const Mask& m) {
  Json j = Json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    Json row = Json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(static_cast<bool>(m(i, c)));
    j.push_back(row);
  }
  return j;
}

Mask mask_from_json(const Json& j) {
  if (j.empty()) return Mask();
  Mask m(j.size(), j[0].size());
  for (std::size_t i = 0; i < j.size(); ++i)
    for (std::size_t c = 0; c < j[i].size(); ++c) m(i, c) = j[i][c].get<bool>();
  return m;
}

Json vec_json(const VectorXd& v) {
  Json j = Json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) j.push_back(v[i]);
  return j;
}

VectorXd vec_from_json(const Json& j) {
  VectorXd v(j.size());
  for (std::size_t i = 0; i < j.size(); ++i) v[i] = j[i].get<double>();
  return v;
}

Json mat_json(const MatrixXd& m) {
  Json j = Json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) j.push_back(vec_json(m.row(i).transpose()));
  return j;
}

MatrixXd mat_from_json(const Json& j) {
  if (j.empty()) return MatrixXd();
  MatrixXd m(j.size(), j[0].size());
  for (std::size_t i = 0; i < j.size(); ++i)
    for (std::size_t c = 0; c < j[i].size(); ++c) m(i, c) = j[i][c].get<double>();
  return m;
}

struct ArchiveFiles {
  std::map<std::string, std::string> files;
};

std::string content_hash(const std::map<std::string, std::string>& blobs, const Json& meta) {
  std::string tree;
  for (const auto& [name, h] : blobs) tree += name + " " + h + "\n";
  tree += meta.dump();
  return sha1_hex(tree);
}

void write_archive(const fs::path& dir, const std::map<std::string, std::string>& files, Json meta) {
  fs::create_directories(dir);
  std::map<std::string, std::string> blobs;
  for (const auto& [name, content] : files) {
    write_file(dir / name, content);
    blobs[name] = blob_hash(content);
  }
  Json manifest;
  manifest["format"] = "lvdfm-chain/1";
  manifest["meta"] = meta;
  manifest["blobs"] = blobs;
  manifest["content_hash"] = content_hash(blobs, meta);
  write_file(dir / "manifest.json", manifest.dump(2) + "\n");
}

// Returns the manifest after verifying every blob and the content hash.
Json read_archive(const fs::path& dir, std::map<std::string, std::string>& files) {
  if (!fs::exists(dir / "manifest.json")) throw Error("no chain archive at " + dir.string());
  Json manifest;
  try {
    manifest = Json::parse(read_file(dir / "manifest.json"));
  } catch (const Json::exception&) {
    throw Error("corrupt archive: unreadable manifest");
  }
  if (!manifest.contains("blobs") || !manifest.contains("meta") || !manifest.contains("content_hash"))
    throw Error("corrupt archive: incomplete manifest");
  std::map<std::string, std::string> blobs;
  for (const auto& [name, h] : manifest["blobs"].items()) {
    if (!fs::exists(dir / name)) throw Error("corrupt archive: missing " + name);
    const std::string content = read_file(dir / name);
    if (blob_hash(content) != h.get<std::string>()) throw Error("corrupt archive: hash mismatch in " + name);
    blobs[name] = h.get<std::string>();
    files[name] = content;
  }
  if (content_hash(blobs, manifest["meta"]) != manifest["content_hash"].get<std::string>())
    throw Error("corrupt archive: content hash mismatch");
  return manifest;
}

Json diagnostics_json(const ChainDiagnostics& d) {
  return {{"volload_acceptance", vec_json(d.volload_acceptance)},
          {"nu_acceptance", vec_json(d.nu_acceptance)},
          {"volload_step", vec_json(d.volload_step)},
          {"nu_step", vec_json(d.nu_step)},
          {"var_stationarity_failures", d.var_stationarity_failures},
          {"rho_stationarity_failures", d.rho_stationarity_failures},
          {"iterations", d.iterations}};
}

ChainDiagnostics diagnostics_from_json(const Json& j) {
  ChainDiagnostics d;
  d.volload_acceptance = vec_from_json(j.at("volload_acceptance"));
  d.nu_acceptance = vec_from_json(j.at("nu_acceptance"));
  d.volload_step = vec_from_json(j.at("volload_step"));
  d.nu_step = vec_from_json(j.at("nu_step"));
  d.var_stationarity_failures = j.at("var_stationarity_failures");
  d.rho_stationarity_failures = j.at("rho_stationarity_failures");
  d.iterations = j.at("iterations");
  return d;
}

template <class T>
void get_if(const Json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

}  // namespace

std::string format_double(double x) { return fmt::format("{:.17g}", x); }

int tcode_loss(TCode code) {
  switch (code) {
    case TCode::None: return 0;
    case TCode::Diff: return 1;
    case TCode::LogDiff: return 1;
    case TCode::LogDiff2: return 2;
  }
  return 0;
}

VectorXd apply_tcode(const Eigen::Ref<const VectorXd>& series, TCode code, const std::string& label,
                     const std::vector<std::string>& dates) {
  const Eigen::Index t = series.size();
  const int loss = tcode_loss(code);
  if (t <= loss) throw Error("series '" + label + "' too short for its transformation");
  VectorXd x = series;
  if (code == TCode::LogDiff || code == TCode::LogDiff2) {
    for (Eigen::Index k = 0; k < t; ++k) {
      if (!(series[k] > 0.0)) {
        const std::string when = k < static_cast<Eigen::Index>(dates.size()) ? dates[k] : std::to_string(k);
        throw Error(fmt::format("nonpositive value in series '{}' at {} under a log transformation", label, when));
      }
      x[k] = std::log(series[k]);
    }
  }
  switch (code) {
    case TCode::None:
      return x;
    case TCode::Diff:
    case TCode::LogDiff:
      return x.tail(t - 1) - x.head(t - 1);
    case TCode::LogDiff2: {
      const VectorXd d = x.tail(t - 1) - x.head(t - 1);
      return d.tail(t - 2) - d.head(t - 2);
    }
  }
  return x;
}

int parse_period(const std::string& s) {
  int year = 0, q = 0, month = 0, day = 0;
  char qc = 0;
  if (std::sscanf(s.c_str(), "%d%c%d", &year, &qc, &q) == 3 && (qc == 'Q' || qc == 'q') && q >= 1 && q <= 4 &&
      s.find('-') == std::string::npos)
    return year * 4 + q - 1;
  if (std::sscanf(s.c_str(), "%d-%d-%d", &year, &month, &day) == 3 && month >= 1 && month <= 12)
    return year * 4 + (month - 1) / 3;
  if (std::sscanf(s.c_str(), "%d/%d/%d", &month, &day, &year) == 3 && month >= 1 && month <= 12)
    return year * 4 + (month - 1) / 3;
  throw Error("unrecognized date '" + s + "'");
}

std::string format_period(int index) { return fmt::format("{}Q{}", index / 4, index % 4 + 1); }

void RawTable::validate() const {
  for (std::size_t t = 1; t < dates.size(); ++t)
    if (parse_period(dates[t]) != parse_period(dates[t - 1]) + 1)
      throw Error("dates must be consecutive quarters (" + dates[t - 1] + " -> " + dates[t] + ")");
}

RawTable read_table(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw Error(path.string() + " is empty");
  auto header = split_csv_line(line);
  if (header.size() < 2) throw Error(path.string() + ": need a date column and at least one series");
  RawTable tab;
  tab.names.assign(header.begin() + 1, header.end());
  std::vector<std::vector<double>> rows;
  std::vector<std::vector<bool>> miss;
  while (std::getline(in, line)) {
    if (line.empty() || line == "\r") continue;
    const auto cells = split_csv_line(line);
    // FRED-QD files carry factor/transform rows whose first cell is not a date.
    int idx;
    try {
      idx = parse_period(cells[0]);
    } catch (const Error&) {
      continue;
    }
    if (cells.size() != header.size()) throw Error(path.string() + ": ragged row at " + cells[0]);
    tab.dates.push_back(format_period(idx));
    std::vector<double> r(tab.names.size());
    std::vector<bool> m(tab.names.size());
    for (std::size_t c = 0; c < tab.names.size(); ++c) {
      double v = std::numeric_limits<double>::quiet_NaN();
      m[c] = !parse_number(cells[c + 1], v);
      r[c] = v;
    }
    rows.push_back(std::move(r));
    miss.push_back(std::move(m));
  }
  tab.values.resize(rows.size(), tab.names.size());
  tab.missing.resize(rows.size(), tab.names.size());
  for (std::size_t t = 0; t < rows.size(); ++t)
    for (std::size_t c = 0; c < tab.names.size(); ++c) {
      tab.values(t, c) = rows[t][c];
      tab.missing(t, c) = miss[t][c];
    }
  tab.validate();
  return tab;
}

std::map<std::string, TCode> read_tcode_map(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path.string());
  std::map<std::string, TCode> out;
  std::string line;
  bool first = true;
  while (std::getline(in, line)) {
    if (line.empty() || line == "\r") continue;
    const auto cells = split_csv_line(line);
    if (cells.size() < 2) throw Error(path.string() + ": expected 'series,tcode' rows");
    if (first && cells[0] == "series") {
      first = false;
      continue;
    }
    first = false;
    out[cells[0]] = parse_tcode(cells[1]);
  }
  return out;
}

Panel panel_from_table(const RawTable& table, const std::map<std::string, TCode>& tcodes, bool standardize) {
  for (const auto& [name, code] : tcodes)
    if (std::find(table.names.begin(), table.names.end(), name) == table.names.end())
      throw Error("unknown column '" + name + "' in transformation-code map");
  std::vector<int> cols;
  std::vector<TCode> codes;
  for (std::size_t c = 0; c < table.names.size(); ++c) {
    if (tcodes.empty()) {
      cols.push_back(static_cast<int>(c));
      codes.push_back(TCode::None);
    } else if (auto it = tcodes.find(table.names[c]); it != tcodes.end()) {
      cols.push_back(static_cast<int>(c));
      codes.push_back(it->second);
    }
  }
  if (cols.empty()) throw Error("no series selected");
  int loss = 0;
  for (TCode c : codes) loss = std::max(loss, tcode_loss(c));
  const auto t_len = static_cast<int>(table.values.rows());
  const int t_out = t_len - loss;
  if (t_out < 2) throw Error("sample too short after transformation");
  MatrixXd data(cols.size(), t_out);
  std::vector<std::string> labels;
  for (std::size_t k = 0; k < cols.size(); ++k) {
    const int c = cols[k];
    const std::string& name = table.names[c];
    labels.push_back(name);
    // A missing raw value poisons the transformed entries that use it.
    for (int t = 0; t < t_len; ++t)
      if (table.missing(t, c) && t + tcode_loss(codes[k]) >= loss)
        throw Error("missing value in series '" + name + "' at " + table.dates[t]);
    const int skip = loss - tcode_loss(codes[k]);
    const VectorXd x = table.values.col(c).segment(skip, t_len - skip);
    std::vector<std::string> d(table.dates.begin() + skip, table.dates.end());
    data.row(k) = apply_tcode(x, codes[k], name, d).transpose();
  }
  std::vector<std::string> dates(table.dates.begin() + loss, table.dates.end());
  return make_panel(data, codes, labels, dates, standardize);
}

Panel load_panel(const fs::path& csv, const std::map<std::string, TCode>& tcodes, bool standardize) {
  return panel_from_table(read_table(csv), tcodes, standardize);
}

void write_panel_csv(const fs::path& path, const Panel& panel) {
  const MatrixXd raw = panel.raw();
  std::string out = "date";
  for (const auto& l : panel.labels) out += "," + l;
  out += '\n';
  for (int t = 0; t < panel.n_periods(); ++t) {
    out += t < static_cast<int>(panel.dates.size()) ? panel.dates[t] : format_period(1900 * 4 + t);
    for (int i = 0; i < panel.n_series(); ++i) out += "," + format_double(raw(i, t));
    out += '\n';
  }
  write_file(path, out);
}

void write_tcode_csv(const fs::path& path, const Panel& panel) {
  std::string out = "series,tcode\n";
  for (int i = 0; i < panel.n_series(); ++i) out += panel.labels[i] + "," + to_string(panel.tcodes[i]) + "\n";
  write_file(path, out);
}

void write_matrix_csv(const fs::path& path, const MatrixXd& m, const std::vector<std::string>& header) {
  std::string out;
  if (!header.empty()) {
    for (std::size_t k = 0; k < header.size(); ++k) out += (k ? "," : "") + header[k];
    out += '\n';
  }
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) out += (j ? "," : "") + format_double(m(i, j));
    out += '\n';
  }
  write_file(path, out);
}

MatrixXd read_matrix_csv(const fs::path& path, bool has_header) {
  std::istringstream in(read_file(path));
  std::string line;
  if (has_header) std::getline(in, line);
  std::vector<std::vector<double>> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<double> r;
    for (const auto& c : split_csv_line(line)) r.push_back(std::strtod(c.c_str(), nullptr));
    if (!rows.empty() && r.size() != rows[0].size()) throw Error(path.string() + ": ragged matrix");
    rows.push_back(std::move(r));
  }
  MatrixXd m(rows.size(), rows.empty() ? 0 : rows[0].size());
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = 0; j < rows[i].size(); ++j) m(i, j) = rows[i][j];
  return m;
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const fs::path& path, const std::string& content) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  out << content;
  if (!out) throw Error("write failed for " + path.string());
}

std::string sha1_hex(const std::string& content) {
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_MD_CTX* ctx = EVP_MD_CTX_new();
  if (!ctx || EVP_DigestInit_ex(ctx, EVP_sha1(), nullptr) != 1 ||
      EVP_DigestUpdate(ctx, content.data(), content.size()) != 1 || EVP_DigestFinal_ex(ctx, md, &len) != 1) {
    EVP_MD_CTX_free(ctx);
    throw Error("SHA-1 digest failed");
  }
  EVP_MD_CTX_free(ctx);
  std::string hex;
  for (unsigned int k = 0; k < len; ++k) hex += fmt::format("{:02x}", md[k]);
  return hex;
}

std::string blob_hash(const std::string& content) {
  std::string s = "blob " + std::to_string(content.size());
  s.push_back('\0');
  return sha1_hex(s + content);
}

Json to_json(const ModelConfig& c) {
  return {{"n_series", c.n_series},
          {"n_level", c.n_level},
          {"n_vol", c.n_vol},
          {"lag_factor", c.lag_factor},
          {"lag_idio", c.lag_idio},
          {"minnesota_tau", c.minnesota_tau},
          {"intercept_tightness", c.intercept_tightness},
          {"nu0", c.nu0},
          {"n_particles", c.n_particles},
          {"n_draws", c.n_draws},
          {"n_burn", c.n_burn},
          {"thin", c.thin},
          {"mh_step_volload", c.mh_step_volload},
          {"mh_step_nu", c.mh_step_nu},
          {"seed", c.seed},
          {"rho_prior_var", c.rho_prior_var},
          {"a_prior_var", c.a_prior_var},
          {"h_prior_scale", c.h_prior_scale},
          {"h_prior_dof", c.h_prior_dof},
          {"loading_prior_var", c.loading_prior_var},
          {"logvol_window", c.logvol_window},
          {"logvol_offset", c.logvol_offset},
          {"stationarity_retries", c.stationarity_retries},
          {"adapt_window", c.adapt_window},
          {"level_anchors", c.level_anchors},
          {"vol_anchors", c.vol_anchors},
          {"level_mask", mask_json(c.level_mask)},
          {"vol_mask", mask_json(c.vol_mask)}};
}

ModelConfig model_config_from_json(const Json& j, ModelConfig c) {
  static const std::vector<std::string> known{
      "n_series", "n_level", "n_vol", "lag_factor", "lag_idio", "minnesota_tau", "intercept_tightness", "nu0",
      "n_particles", "n_draws", "n_burn", "thin", "mh_step_volload", "mh_step_nu", "seed", "rho_prior_var",
      "a_prior_var", "h_prior_scale", "h_prior_dof", "loading_prior_var", "logvol_window", "logvol_offset",
      "stationarity_retries", "adapt_window", "level_anchors", "vol_anchors", "level_mask", "vol_mask"};
  for (const auto& [key, value] : j.items())
    if (std::find(known.begin(), known.end(), key) == known.end()) throw Error("unknown model config key '" + key + "'");
  try {
    get_if(j, "n_series", c.n_series);
    get_if(j, "n_level", c.n_level);
    get_if(j, "n_vol", c.n_vol);
    get_if(j, "lag_factor", c.lag_factor);
    get_if(j, "lag_idio", c.lag_idio);
    get_if(j, "minnesota_tau", c.minnesota_tau);
    get_if(j, "intercept_tightness", c.intercept_tightness);
    get_if(j, "nu0", c.nu0);
    get_if(j, "n_particles", c.n_particles);
    get_if(j, "n_draws", c.n_draws);
    get_if(j, "n_burn", c.n_burn);
    get_if(j, "thin", c.thin);
    get_if(j, "mh_step_volload", c.mh_step_volload);
    get_if(j, "mh_step_nu", c.mh_step_nu);
    get_if(j, "seed", c.seed);
    get_if(j, "rho_prior_var", c.rho_prior_var);
    get_if(j, "a_prior_var", c.a_prior_var);
    get_if(j, "h_prior_scale", c.h_prior_scale);
    get_if(j, "h_prior_dof", c.h_prior_dof);
    get_if(j, "loading_prior_var", c.loading_prior_var);
    get_if(j, "logvol_window", c.logvol_window);
    get_if(j, "logvol_offset", c.logvol_offset);
    get_if(j, "stationarity_retries", c.stationarity_retries);
    get_if(j, "adapt_window", c.adapt_window);
    get_if(j, "level_anchors", c.level_anchors);
    get_if(j, "vol_anchors", c.vol_anchors);
    if (j.contains("level_mask")) c.level_mask = mask_from_json(j.at("level_mask"));
    if (j.contains("vol_mask")) c.vol_mask = mask_from_json(j.at("vol_mask"));
  } catch (const Json::exception& e) {
    throw Error(std::string("bad model config: ") + e.what());
  }
  return c;
}

Json to_json(const DgpSpec& s) {
  return {{"n_series", s.n_series},   {"n_level", s.n_level},     {"n_vol", s.n_vol},
          {"t_total", s.t_total},     {"t_burn", s.t_burn},       {"phi", mat_json(s.phi)},
          {"sigma", mat_json(s.sigma)}, {"intercept", vec_json(s.intercept)}, {"rho_lo", s.rho_lo},
          {"rho_hi", s.rho_hi},       {"nu_lo", s.nu_lo},         {"nu_hi", s.nu_hi},
          {"loading_law", s.loading_law}, {"loading_scale", s.loading_scale},
          {"identity_blocks", s.identity_blocks}};
}

DgpSpec dgp_from_json(const Json& j, DgpSpec s) {
  try {
    get_if(j, "n_series", s.n_series);
    get_if(j, "n_level", s.n_level);
    get_if(j, "n_vol", s.n_vol);
    get_if(j, "t_total", s.t_total);
    get_if(j, "t_burn", s.t_burn);
    if (j.contains("phi")) s.phi = mat_from_json(j.at("phi"));
    if (j.contains("sigma")) s.sigma = mat_from_json(j.at("sigma"));
    if (j.contains("intercept")) s.intercept = vec_from_json(j.at("intercept"));
    get_if(j, "rho_lo", s.rho_lo);
    get_if(j, "rho_hi", s.rho_hi);
    get_if(j, "nu_lo", s.nu_lo);
    get_if(j, "nu_hi", s.nu_hi);
    get_if(j, "loading_law", s.loading_law);
    get_if(j, "loading_scale", s.loading_scale);
    get_if(j, "identity_blocks", s.identity_blocks);
  } catch (const Json::exception& e) {
    throw Error(std::string("bad dgp config: ") + e.what());
  }
  return s;
}

Json to_json(const BenchmarkConfig& b) {
  return {{"q_prior_scale", b.q_prior_scale},
          {"q_prior_dof", b.q_prior_dof},
          {"sv_step", b.sv_step},
          {"logvol_init_var", b.logvol_init_var}};
}

BenchmarkConfig benchmark_config_from_json(const Json& j, BenchmarkConfig b) {
  try {
    get_if(j, "q_prior_scale", b.q_prior_scale);
    get_if(j, "q_prior_dof", b.q_prior_dof);
    get_if(j, "sv_step", b.sv_step);
    get_if(j, "logvol_init_var", b.logvol_init_var);
  } catch (const Json::exception& e) {
    throw Error(std::string("bad benchmark config: ") + e.what());
  }
  return b;
}

void store_chain(const fs::path& dir, const Chain& chain) {
  if (chain.draws.empty()) throw Error("store_chain: empty chain");
  const ParamDraw& d0 = chain.draws[0];
  auto collect = [&](auto member) {
    std::vector<const MatrixXd*> v;
    for (const auto& d : chain.draws) v.push_back(&(d.*member));
    return stack_rows(v);
  };
  std::vector<const MatrixXd*> paths;
  for (const auto& p : chain.paths) paths.push_back(&p.path);
  std::vector<MatrixXd> hs, nus;
  for (const auto& d : chain.draws) {
    hs.emplace_back(d.h_diag);
    nus.emplace_back(d.nu);
  }
  std::vector<const MatrixXd*> hp, np;
  for (const auto& m : hs) hp.push_back(&m);
  for (const auto& m : nus) np.push_back(&m);
  std::map<std::string, std::string> files{
      {"gamma.csv", collect(&ParamDraw::gamma)},     {"a_mat.csv", collect(&ParamDraw::a_mat)},
      {"h_diag.csv", stack_rows(hp)},                {"b_level.csv", collect(&ParamDraw::b_level)},
      {"b_vol.csv", collect(&ParamDraw::b_vol)},     {"rho.csv", collect(&ParamDraw::rho)},
      {"lambda.csv", collect(&ParamDraw::lambda)},   {"nu.csv", stack_rows(np)},
      {"paths.csv", stack_rows(paths)}};
  Json meta;
  meta["kind"] = "lv";
  meta["seed"] = chain.config.seed;
  meta["config"] = to_json(chain.config);
  meta["diagnostics"] = diagnostics_json(chain.diagnostics);
  meta["n_stored"] = chain.draws.size();
  meta["shapes"] = {{"gamma", matrix_shape(d0.gamma)},     {"a_mat", matrix_shape(d0.a_mat)},
                    {"h_diag", {d0.h_diag.size(), 1}},     {"b_level", matrix_shape(d0.b_level)},
                    {"b_vol", matrix_shape(d0.b_vol)},     {"rho", matrix_shape(d0.rho)},
                    {"lambda", matrix_shape(d0.lambda)},   {"nu", {d0.nu.size(), 1}},
                    {"paths", matrix_shape(chain.paths[0].path)}};
  meta["path_n_level"] = chain.paths[0].n_level;
  write_archive(dir, files, meta);
}

Chain load_chain(const fs::path& dir) {
  std::map<std::string, std::string> files;
  const Json manifest = read_archive(dir, files);
  const Json& meta = manifest["meta"];
  if (meta.value("kind", "") != "lv") throw Error("archive is not an LV-DFM chain");
  Chain chain;
  chain.config = model_config_from_json(meta["config"]);
  chain.diagnostics = diagnostics_from_json(meta["diagnostics"]);
  auto load = [&](const std::string& name) {
    const Json& s = meta["shapes"][name];
    return unstack_rows(files.at(name + ".csv"), s[0].get<Eigen::Index>(), s[1].get<Eigen::Index>());
  };
  const auto gamma = load("gamma"), a = load("a_mat"), h = load("h_diag"), bl = load("b_level"), bv = load("b_vol"),
             rho = load("rho"), lam = load("lambda"), nu = load("nu"), paths = load("paths");
  const std::size_t n = meta["n_stored"].get<std::size_t>();
  for (const auto* v : {&gamma, &a, &h, &bl, &bv, &rho, &lam, &nu, &paths})
    if (v->size() != n) throw Error("corrupt archive: draw count mismatch");
  for (std::size_t k = 0; k < n; ++k) {
    ParamDraw d;
    d.gamma = gamma[k];
    d.a_mat = a[k];
    d.h_diag = h[k].col(0);
    d.b_level = bl[k];
    d.b_vol = bv[k];
    d.rho = rho[k];
    d.lambda = lam[k];
    d.nu = nu[k].col(0);
    chain.draws.push_back(std::move(d));
    FactorPath p;
    p.path = paths[k];
    p.n_level = meta["path_n_level"].get<int>();
    chain.paths.push_back(std::move(p));
  }
  return chain;
}

void store_chain(const fs::path& dir, const BenchmarkChain& chain) {
  if (chain.draws.empty()) throw Error("store_chain: empty chain");
  const BenchmarkDraw& d0 = chain.draws[0];
  auto collect = [&](auto member) {
    std::vector<const MatrixXd*> v;
    for (const auto& d : chain.draws) v.push_back(&(d.*member));
    return stack_rows(v);
  };
  std::vector<MatrixXd> hs, qs;
  for (const auto& d : chain.draws) {
    hs.emplace_back(d.h_diag);
    qs.emplace_back(d.q);
  }
  std::vector<const MatrixXd*> hp, qp, paths;
  for (const auto& m : hs) hp.push_back(&m);
  for (const auto& m : qs) qp.push_back(&m);
  for (const auto& p : chain.paths) paths.push_back(&p.path);
  std::map<std::string, std::string> files{
      {"gamma.csv", collect(&BenchmarkDraw::gamma)},   {"a_mat.csv", collect(&BenchmarkDraw::a_mat)},
      {"h_diag.csv", stack_rows(hp)},                  {"b_level.csv", collect(&BenchmarkDraw::b_level)},
      {"rho.csv", collect(&BenchmarkDraw::rho)},       {"log_omega.csv", collect(&BenchmarkDraw::log_omega)},
      {"q.csv", stack_rows(qp)},                       {"paths.csv", stack_rows(paths)}};
  Json meta;
  meta["kind"] = "benchmark";
  meta["seed"] = chain.config.seed;
  meta["config"] = to_json(chain.config);
  meta["benchmark"] = to_json(chain.bench);
  meta["diagnostics"] = {{"sv_acceptance", vec_json(chain.sv_acceptance)},
                         {"sv_step", vec_json(chain.sv_step)},
                         {"var_stationarity_failures", chain.var_stationarity_failures},
                         {"rho_stationarity_failures", chain.rho_stationarity_failures}};
  meta["n_stored"] = chain.draws.size();
  meta["shapes"] = {{"gamma", matrix_shape(d0.gamma)},       {"a_mat", matrix_shape(d0.a_mat)},
                    {"h_diag", {d0.h_diag.size(), 1}},       {"b_level", matrix_shape(d0.b_level)},
                    {"rho", matrix_shape(d0.rho)},           {"log_omega", matrix_shape(d0.log_omega)},
                    {"q", {d0.q.size(), 1}},                 {"paths", matrix_shape(chain.paths[0].path)}};
  write_archive(dir, files, meta);
}

BenchmarkChain load_benchmark_chain(const fs::path& dir) {
  std::map<std::string, std::string> files;
  const Json manifest = read_archive(dir, files);
  const Json& meta = manifest["meta"];
  if (meta.value("kind", "") != "benchmark") throw Error("archive is not a benchmark chain");
  BenchmarkChain chain;
  chain.config = model_config_from_json(meta["config"]);
  chain.bench = benchmark_config_from_json(meta["benchmark"]);
  const Json& dg = meta["diagnostics"];
  chain.sv_acceptance = vec_from_json(dg["sv_acceptance"]);
  chain.sv_step = vec_from_json(dg["sv_step"]);
  chain.var_stationarity_failures = dg["var_stationarity_failures"];
  chain.rho_stationarity_failures = dg["rho_stationarity_failures"];
  auto load = [&](const std::string& name) {
    const Json& s = meta["shapes"][name];
    return unstack_rows(files.at(name + ".csv"), s[0].get<Eigen::Index>(), s[1].get<Eigen::Index>());
  };
  const auto gamma = load("gamma"), a = load("a_mat"), h = load("h_diag"), bl = load("b_level"), rho = load("rho"),
             lw = load("log_omega"), q = load("q"), paths = load("paths");
  const std::size_t n = meta["n_stored"].get<std::size_t>();
  for (const auto* v : {&gamma, &a, &h, &bl, &rho, &lw, &q, &paths})
    if (v->size() != n) throw Error("corrupt archive: draw count mismatch");
  for (std::size_t k = 0; k < n; ++k) {
    BenchmarkDraw d;
    d.gamma = gamma[k];
    d.a_mat = a[k];
    d.h_diag = h[k].col(0);
    d.b_level = bl[k];
    d.rho = rho[k];
    d.log_omega = lw[k];
    d.q = q[k].col(0);
    chain.draws.push_back(std::move(d));
    FactorPath p;
    p.path = paths[k];
    p.n_level = static_cast<int>(p.path.cols());
    chain.paths.push_back(std::move(p));
  }
  return chain;
}

std::string archive_kind(const fs::path& dir) {
  try {
    const Json manifest = Json::parse(read_file(dir / "manifest.json"));
    return manifest.at("meta").at("kind").get<std::string>();
  } catch (const Json::exception&) {
    throw Error("corrupt archive: unreadable manifest");
  }
}

std::string archive_hash(const fs::path& dir) {
  std::map<std::string, std::string> files;
  return read_archive(dir, files)["content_hash"].get<std::string>();
}

void write_forecast_run(const fs::path& dir, const ForecastRun& run, const Panel& panel) {
  fs::create_directories(dir);
  const std::string model = to_string(run.model);
  auto date_of = [&](int o) {
    return o - 1 >= 0 && o - 1 < static_cast<int>(panel.dates.size()) ? panel.dates[o - 1] : std::to_string(o);
  };
  std::string draws = "origin,origin_date,horizon,target,draw,value\n";
  std::string realized = "origin,origin_date,horizon,target,value\n";
  Json meta;
  meta["model"] = model;
  meta["origins"] = run.origins;
  meta["h_list"] = run.h_list;
  meta["targets"] = run.targets;
  meta["labels"] = run.labels;
  std::vector<std::string> codes;
  for (TCode c : run.tcodes) codes.push_back(to_string(c));
  meta["tcodes"] = codes;
  Json failures = Json::object();
  for (const auto& of : run.results) {
    const std::string od = date_of(of.origin);
    if (of.failed) failures[std::to_string(of.origin)] = of.error;
    for (std::size_t a = 0; a < run.h_list.size(); ++a)
      for (std::size_t v = 0; v < run.targets.size(); ++v) {
        realized += fmt::format("{},{},{},{},{}\n", of.origin, od, run.h_list[a], run.labels[v],
                                std::isfinite(of.realized(a, v)) ? format_double(of.realized(a, v)) : "NA");
        if (of.failed) continue;
        const MatrixXd& m = of.by_horizon[a].draws[0];
        for (Eigen::Index k = 0; k < m.rows(); ++k)
          draws += fmt::format("{},{},{},{},{},{}\n", of.origin, od, run.h_list[a], run.labels[v], k,
                               format_double(m(k, v)));
      }
  }
  meta["failed"] = failures;
  write_file(dir / ("draws_" + model + ".csv"), draws);
  write_file(dir / ("realized_" + model + ".csv"), realized);
  write_file(dir / ("run_" + model + ".json"), meta.dump(2) + "\n");
}

ForecastRun read_forecast_run(const fs::path& dir, const std::string& model) {
  Json meta;
  try {
    meta = Json::parse(read_file(dir / ("run_" + model + ".json")));
  } catch (const Json::exception&) {
    throw Error("unreadable forecast metadata in " + dir.string());
  }
  ForecastRun run;
  run.model = parse_model_kind(model);
  run.origins = meta.at("origins").get<std::vector<int>>();
  run.h_list = meta.at("h_list").get<std::vector<int>>();
  run.targets = meta.at("targets").get<std::vector<int>>();
  run.labels = meta.at("labels").get<std::vector<std::string>>();
  for (const auto& c : meta.at("tcodes")) run.tcodes.push_back(parse_tcode(c.get<std::string>()));
  const Json& failures = meta.at("failed");
  const std::size_t nh = run.h_list.size(), nv = run.targets.size();
  std::map<int, std::size_t> origin_pos;
  for (std::size_t k = 0; k < run.origins.size(); ++k) {
    origin_pos[run.origins[k]] = k;
    OriginForecast of;
    of.origin = run.origins[k];
    of.failed = failures.contains(std::to_string(of.origin));
    if (of.failed) of.error = failures[std::to_string(of.origin)].get<std::string>();
    of.realized = MatrixXd::Constant(nh, nv, std::numeric_limits<double>::quiet_NaN());
    run.results.push_back(std::move(of));
  }
  auto h_pos = [&](int h) {
    auto it = std::find(run.h_list.begin(), run.h_list.end(), h);
    if (it == run.h_list.end()) throw Error("forecast file: unknown horizon");
    return static_cast<std::size_t>(it - run.h_list.begin());
  };
  auto v_pos = [&](const std::string& l) {
    auto it = std::find(run.labels.begin(), run.labels.end(), l);
    if (it == run.labels.end()) throw Error("forecast file: unknown target " + l);
    return static_cast<std::size_t>(it - run.labels.begin());
  };
  {
    std::istringstream in(read_file(dir / ("realized_" + model + ".csv")));
    std::string line;
    std::getline(in, line);
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      const auto c = split_csv_line(line);
      double v = std::numeric_limits<double>::quiet_NaN();
      parse_number(c[4], v);
      run.results.at(origin_pos.at(std::stoi(c[0]))).realized(h_pos(std::stoi(c[2])), v_pos(c[3])) = v;
    }
  }
  // draws[origin][h] : list of rows per target
  std::vector<std::vector<std::vector<std::vector<double>>>> buf(
      run.origins.size(), std::vector<std::vector<std::vector<double>>>(nh, std::vector<std::vector<double>>(nv)));
  {
    std::istringstream in(read_file(dir / ("draws_" + model + ".csv")));
    std::string line;
    std::getline(in, line);
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      const auto c = split_csv_line(line);
      if (c.size() != 6) throw Error("forecast file: bad draw row");
      buf[origin_pos.at(std::stoi(c[0]))][h_pos(std::stoi(c[2]))][v_pos(c[3])].push_back(
          std::strtod(c[5].c_str(), nullptr));
    }
  }
  for (std::size_t k = 0; k < run.origins.size(); ++k) {
    OriginForecast& of = run.results[k];
    if (of.failed) continue;
    for (std::size_t a = 0; a < nh; ++a) {
      PredictiveDensity pd;
      pd.targets = run.targets;
      pd.labels = run.labels;
      pd.origin = of.origin;
      pd.cumulated = true;
      const std::size_t m = buf[k][a][0].size();
      MatrixXd d(m, nv);
      for (std::size_t v = 0; v < nv; ++v) {
        if (buf[k][a][v].size() != m) throw Error("forecast file: unequal draw counts");
        for (std::size_t r = 0; r < m; ++r) d(r, v) = buf[k][a][v][r];
      }
      pd.draws = {d};
      of.by_horizon.push_back(std::move(pd));
    }
  }
  return run;
}

}  // namespace lvdfm

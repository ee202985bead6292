#pragma once

#include <array>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>
#include <openssl/evp.h>

#include "circspace/io/csv.hpp"
#include "circspace/model_types.hpp"
#include "circspace/projected_model.hpp"
#include "circspace/wrapped_model.hpp"

namespace circspace::io {

using nlohmann::json;
namespace fs = std::filesystem;

inline constexpr const char* kToolVersion = "0.1.0";

[[nodiscard]] inline std::string sha256_hex(std::string_view bytes) {
  std::array<unsigned char, EVP_MAX_MD_SIZE> md{};
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), md.data(), &len, EVP_sha256(), nullptr) != 1)
    throw std::runtime_error("sha256 failed");
  std::ostringstream os;
  for (unsigned int i = 0; i < len; ++i) os << std::hex << std::setw(2) << std::setfill('0') << static_cast<int>(md[i]);
  return os.str();
}

[[nodiscard]] inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

[[nodiscard]] inline std::string file_sha256(const std::string& path) { return sha256_hex(read_file(path)); }

inline void ensure_dir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw ValidationError("cannot create directory '" + dir + "': " + ec.message());
}

inline void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ValidationError("cannot write '" + path + "'");
  out << text;
}

[[nodiscard]] inline std::string chain_file(const std::string& dir, std::size_t c) {
  return (fs::path(dir) / ("chain_" + std::to_string(c + 1) + ".tsv")).string();
}
[[nodiscard]] inline std::string state_file(const std::string& dir, std::size_t c) {
  return (fs::path(dir) / ("state_" + std::to_string(c + 1) + ".json")).string();
}
[[nodiscard]] inline std::string manifest_file(const std::string& dir) { return (fs::path(dir) / "manifest.json").string(); }

/// Tab-separated table: one header line of column names, one row per draw.
inline void write_draw_table(const std::string& path, const DrawTable& t) {
  std::string s;
  for (std::size_t i = 0; i < t.columns.size(); ++i) s += (i ? "\t" : "") + t.columns[i];
  s += '\n';
  for (const auto& r : t.rows) {
    for (std::size_t i = 0; i < r.size(); ++i) {
      if (i) s += '\t';
      s += format_double(r[i]);
    }
    s += '\n';
  }
  write_text(path, s);
}

[[nodiscard]] inline DrawTable read_draw_table(const std::string& path) {
  std::istringstream in(read_file(path));
  DrawTable t;
  std::string line;
  std::size_t no = 0;
  while (std::getline(in, line)) {
    ++no;
    if (line.empty()) continue;
    std::vector<std::string> fields;
    std::size_t start = 0;
    while (true) {
      const auto tab = line.find('\t', start);
      fields.push_back(line.substr(start, tab == std::string::npos ? std::string::npos : tab - start));
      if (tab == std::string::npos) break;
      start = tab + 1;
    }
    if (t.columns.empty()) {
      t.columns = std::move(fields);
      continue;
    }
    if (fields.size() != t.columns.size())
      throw ValidationError("'" + path + "' line " + std::to_string(no) + ": wrong number of fields");
    std::vector<double> row;
    row.reserve(fields.size());
    for (const auto& f : fields) {
      const auto v = parse_double(f);
      if (!v) throw ValidationError("'" + path + "' line " + std::to_string(no) + ": not a number '" + f + "'");
      row.push_back(*v);
    }
    t.rows.push_back(std::move(row));
  }
  if (t.columns.empty()) throw ValidationError("'" + path + "' is empty");
  return t;
}

namespace detail {

inline json to_json(const Eigen::VectorXd& v) { return std::vector<double>(v.data(), v.data() + v.size()); }
inline json to_json(const Eigen::MatrixXd& m) {
  json rows = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    std::vector<double> r(static_cast<std::size_t>(m.cols()));
    for (Eigen::Index j = 0; j < m.cols(); ++j) r[static_cast<std::size_t>(j)] = m(i, j);
    rows.push_back(r);
  }
  return rows;
}
inline Eigen::VectorXd vec_from(const json& j) {
  const auto v = j.get<std::vector<double>>();
  return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}
inline Eigen::MatrixXd mat_from(const json& j) {
  const auto rows = j.get<std::vector<std::vector<double>>>();
  const auto n = static_cast<Eigen::Index>(rows.size());
  const auto m = n ? static_cast<Eigen::Index>(rows[0].size()) : 0;
  Eigen::MatrixXd out(n, m);
  for (Eigen::Index i = 0; i < n; ++i) {
    if (static_cast<Eigen::Index>(rows[static_cast<std::size_t>(i)].size()) != m) throw ValidationError("ragged matrix in state file");
    for (Eigen::Index k = 0; k < m; ++k) out(i, k) = rows[static_cast<std::size_t>(i)][static_cast<std::size_t>(k)];
  }
  return out;
}

inline json to_json(const BlockAdaptState& a) {
  return {{"mu", to_json(a.mu)}, {"sigma", to_json(a.sigma)}, {"lambda", a.lambda},
          {"xi", a.xi},          {"target", a.target},        {"iteration", a.iteration}};
}
inline BlockAdaptState block_from(const json& j) {
  BlockAdaptState a;
  a.mu = vec_from(j.at("mu"));
  a.sigma = mat_from(j.at("sigma"));
  a.lambda = j.at("lambda").get<double>();
  a.xi = j.at("xi").get<double>();
  a.target = j.at("target").get<double>();
  a.iteration = j.at("iteration").get<std::int64_t>();
  return a;
}
inline json to_json(const ScalarAdaptState& a) {
  return {{"log_sd", to_json(a.log_sd)}, {"alpha_sum", to_json(a.alpha_sum)}, {"batch_size", a.batch_size},
          {"filled", a.filled},          {"xi", a.xi},                        {"target", a.target},
          {"batch", a.batch}};
}
inline ScalarAdaptState scalar_from(const json& j) {
  ScalarAdaptState a;
  a.log_sd = vec_from(j.at("log_sd"));
  a.alpha_sum = vec_from(j.at("alpha_sum"));
  a.batch_size = j.at("batch_size").get<int>();
  a.filled = j.at("filled").get<int>();
  a.xi = j.at("xi").get<double>();
  a.target = j.at("target").get<double>();
  a.batch = j.at("batch").get<std::int64_t>();
  return a;
}

}  // namespace detail

[[nodiscard]] inline json state_to_json(const WnChainState& s) {
  return {{"end_state", true},
          {"model", "wn"},
          {"alpha", s.alpha},
          {"k", s.k},
          {"cov_x", detail::to_json(s.cov_x)},
          {"adapt", detail::to_json(s.adapt)},
          {"iteration", s.iteration},
          {"rng", s.rng_state}};
}

[[nodiscard]] inline json state_to_json(const PnChainState& s) {
  return {{"end_state", true},
          {"model", "pn"},
          {"alpha", {s.alpha[0], s.alpha[1]}},
          {"r", detail::to_json(s.r)},
          {"cov_x", detail::to_json(s.cov_x)},
          {"adapt", detail::to_json(s.adapt)},
          {"radius", detail::to_json(s.radius)},
          {"iteration", s.iteration},
          {"rng", s.rng_state}};
}

[[nodiscard]] inline WnChainState wn_state_from_json(const json& j) {
  try {
    if (j.at("model").get<std::string>() != "wn") throw ValidationError("state file is not from a wrapped-normal fit");
    WnChainState s;
    s.alpha = j.at("alpha").get<double>();
    s.k = j.at("k").get<std::vector<std::int64_t>>();
    s.cov_x = detail::vec_from(j.at("cov_x"));
    s.adapt = detail::block_from(j.at("adapt"));
    s.iteration = j.at("iteration").get<std::int64_t>();
    s.rng_state = j.at("rng").get<std::string>();
    return s;
  } catch (const json::exception& e) {
    throw ValidationError(std::string("malformed state file: ") + e.what());
  }
}

[[nodiscard]] inline PnChainState pn_state_from_json(const json& j) {
  try {
    if (j.at("model").get<std::string>() != "pn") throw ValidationError("state file is not from a projected-normal fit");
    PnChainState s;
    const auto a = j.at("alpha").get<std::vector<double>>();
    if (a.size() != 2) throw ValidationError("malformed state file: alpha");
    s.alpha = Eigen::Vector2d(a[0], a[1]);
    s.r = detail::vec_from(j.at("r"));
    s.cov_x = detail::vec_from(j.at("cov_x"));
    s.adapt = detail::block_from(j.at("adapt"));
    s.radius = detail::scalar_from(j.at("radius"));
    s.iteration = j.at("iteration").get<std::int64_t>();
    s.rng_state = j.at("rng").get<std::string>();
    return s;
  } catch (const json::exception& e) {
    throw ValidationError(std::string("malformed state file: ") + e.what());
  }
}

/// Enough of the correlation spec to rebuild it: the family and the fixed nu.
[[nodiscard]] inline json spec_to_json(const CorrelationSpec& spec) {
  json j{{"family", std::string(family_name(spec.family()))}};
  if (const auto* m = std::get_if<Matern>(&spec.params())) j["nu"] = m->nu;
  return j;
}

[[nodiscard]] inline CorrelationSpec spec_from_json(const json& j) {
  const Family f = parse_family(j.at("family").get<std::string>());
  switch (f) {
    case Family::matern: return CorrelationSpec{Matern{j.at("nu").get<double>(), 1.0}};
    case Family::exponential: return CorrelationSpec{Exponential{1.0}};
    case Family::gaussian: return CorrelationSpec{GaussianKernel{1.0}};
    case Family::gneiting: return CorrelationSpec{Gneiting{1.0, 1.0, 0.5}};
  }
  throw ValidationError("unknown family in manifest");
}

/// Load the stored draws of a fit directory.
[[nodiscard]] inline std::pair<PosteriorDraws, json> load_draws(const std::string& dir) {
  const std::string mpath = manifest_file(dir);
  json manifest;
  {
    std::ifstream in(mpath);
    if (!in) throw ValidationError("no manifest.json in '" + dir + "'");
    try {
      manifest = json::parse(in);
    } catch (const json::exception& e) {
      throw ValidationError("cannot parse '" + mpath + "': " + e.what());
    }
  }
  PosteriorDraws d;
  try {
    const std::string kind = manifest.at("model_kind").get<std::string>();
    if (kind != "wn" && kind != "pn") throw ValidationError("manifest: unknown model_kind '" + kind + "'");
    d.kind = kind == "wn" ? ModelKind::wn : ModelKind::pn;
    d.spec = spec_from_json(manifest.at("correlation"));
    d.shift = manifest.at("shift").get<double>();
    const auto n = manifest.at("chains").get<std::size_t>();
    for (std::size_t c = 0; c < n; ++c) {
      d.chains.push_back(read_draw_table(chain_file(dir, c)));
      ChainStats st;
      if (manifest.contains("acceptance") && c < manifest["acceptance"].size()) {
        const auto& a = manifest["acceptance"][c];
        st.block_proposals = a.value("block_proposals", std::int64_t{0});
        st.block_accepts = a.value("block_accepts", std::int64_t{0});
        st.latent_proposals = a.value("latent_proposals", std::int64_t{0});
        st.latent_accepts = a.value("latent_accepts", std::int64_t{0});
      }
      d.stats.push_back(st);
    }
  } catch (const json::exception& e) {
    throw ValidationError("malformed manifest '" + mpath + "': " + e.what());
  }
  return {std::move(d), std::move(manifest)};
}

}  // namespace circspace::io

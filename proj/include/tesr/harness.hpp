#pragma once

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "tesr/linear.hpp"
#include "tesr/metrics.hpp"
#include "tesr/simgen.hpp"
#include "tesr/training.hpp"

namespace tesr {

// ---------------------------------------------------------------------------
// CSV I/O

inline std::string format_real(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  std::istringstream in(line);
  while (std::getline(in, cell, ',')) cells.push_back(cell);
  if (!line.empty() && line.back() == ',') cells.emplace_back();
  return cells;
}

inline std::string trim(std::string s) {
  const auto not_space = [](unsigned char c) { return !std::isspace(c); };
  s.erase(s.begin(), std::find_if(s.begin(), s.end(), not_space));
  s.erase(std::find_if(s.rbegin(), s.rend(), not_space).base(), s.end());
  return s;
}

inline double parse_cell(const std::string& raw, const std::string& path, std::size_t line_no, std::size_t col) {
  const std::string cell = trim(raw);
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(cell, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  require(!cell.empty() && used == cell.size(), path + ":" + std::to_string(line_no) + ": non-numeric value '" +
                                                   cell + "' in column " + std::to_string(col + 1));
  return v;
}

}  // namespace detail

/// A parsed dataset CSV: covariates x1..xd, response y and, when present, the
/// per-row domain column.
struct CsvTable {
  DomainDataset data;
  std::vector<int> domain;  // empty when the file has no domain column
};

/// Reads "x1,...,xd,y[,domain]". Classification labels must be non-negative
/// integers; the class count is max label + 1 (at least 2).
inline CsvTable load_csv_table(const std::string& path, TaskKind task) {
  std::ifstream in(path);
  require(in.good(), "load_csv_dataset: cannot open " + path);
  std::string line;
  require(static_cast<bool>(std::getline(in, line)), path + ": empty file, no header");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  std::vector<std::string> header = detail::split_csv_line(line);
  for (auto& h : header) h = detail::trim(h);
  const bool has_domain = !header.empty() && header.back() == "domain";
  const std::size_t ycol = header.size() - (has_domain ? 2 : 1);
  require(header.size() >= (has_domain ? 3u : 2u), path + ":1: header needs x1..xd and y columns");
  require(header[ycol] == "y", path + ":1: missing column 'y' (found '" + header[ycol] + "')");
  for (std::size_t j = 0; j < ycol; ++j)
    require(header[j] == "x" + std::to_string(j + 1),
            path + ":1: expected column 'x" + std::to_string(j + 1) + "', found '" + header[j] + "'");
  const std::size_t d = ycol;
  std::vector<double> xs, ys;
  CsvTable table;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (detail::trim(line).empty()) continue;
    const auto cells = detail::split_csv_line(line);
    require(cells.size() == header.size(), path + ":" + std::to_string(line_no) + ": expected " +
                                               std::to_string(header.size()) + " fields, found " +
                                               std::to_string(cells.size()));
    for (std::size_t j = 0; j < d; ++j) xs.push_back(detail::parse_cell(cells[j], path, line_no, j));
    const double y = detail::parse_cell(cells[ycol], path, line_no, ycol);
    if (task == TaskKind::classification)
      require(y >= 0 && y == std::floor(y),
              path + ":" + std::to_string(line_no) + ": class label must be a non-negative integer");
    ys.push_back(y);
    if (has_domain) {
      const double dom = detail::parse_cell(cells.back(), path, line_no, header.size() - 1);
      require(dom == std::floor(dom), path + ":" + std::to_string(line_no) + ": domain must be an integer");
      table.domain.push_back(static_cast<int>(dom));
    }
  }
  require(!ys.empty(), path + ": no rows");
  const Index n = static_cast<Index>(ys.size());
  DomainDataset& ds = table.data;
  ds.x = Eigen::Map<const Tensor2D>(xs.data(), n, static_cast<Index>(d));
  ds.y = Eigen::Map<const Eigen::VectorXd>(ys.data(), n);
  ds.task = task;
  if (task == TaskKind::classification) ds.num_classes = std::max(2, static_cast<int>(ds.y.maxCoeff()) + 1);
  if (has_domain && !table.domain.empty()) ds.domain_id = table.domain.front();
  ds.validate();
  return table;
}

inline DomainDataset load_csv_dataset(const std::string& path, TaskKind task) { return load_csv_table(path, task).data; }

/// Splits a table with a domain column into one dataset per distinct domain
/// value (ascending). Without the column the whole table is one domain.
inline std::vector<DomainDataset> split_domains(const CsvTable& table) {
  if (table.domain.empty()) return {table.data};
  std::map<int, std::vector<Index>> rows;
  for (std::size_t i = 0; i < table.domain.size(); ++i) rows[table.domain[i]].push_back(static_cast<Index>(i));
  std::vector<DomainDataset> out;
  for (const auto& [dom, idx] : rows) {
    DomainDataset ds = table.data.subset(idx);
    ds.domain_id = dom;
    out.push_back(std::move(ds));
  }
  return out;
}

inline void write_dataset(const DomainDataset& ds, const std::string& path, bool with_domain = false) {
  std::ofstream out(path, std::ios::binary);
  require(out.good(), "write_dataset: cannot open " + path);
  for (Index j = 0; j < ds.dim(); ++j) out << 'x' << (j + 1) << ',';
  out << 'y';
  if (with_domain) out << ",domain";
  out << '\n';
  for (Index i = 0; i < ds.size(); ++i) {
    for (Index j = 0; j < ds.dim(); ++j) out << format_real(ds.x(i, j)) << ',';
    out << format_real(ds.y(i, 0));
    if (with_domain) out << ',' << ds.domain_id;
    out << '\n';
  }
  require(out.good(), "write_dataset: write failed for " + path);
}

/// Reads a headerless or headed numeric matrix (comma separated). A first
/// line that does not parse as numbers is treated as a header.
inline Tensor2D load_matrix_csv(const std::string& path) {
  std::ifstream in(path);
  require(in.good(), "cannot open " + path);
  std::vector<double> vals;
  std::size_t cols = 0, line_no = 0;
  Index rows = 0;
  std::string line;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (detail::trim(line).empty()) continue;
    const auto cells = detail::split_csv_line(line);
    if (rows == 0 && cols == 0) {
      bool numeric = true;
      try {
        for (const auto& c : cells) detail::parse_cell(c, path, line_no, 0);
      } catch (const Error&) {
        numeric = false;
      }
      if (!numeric) continue;
    }
    if (cols == 0) cols = cells.size();
    require(cells.size() == cols, path + ":" + std::to_string(line_no) + ": expected " + std::to_string(cols) +
                                      " fields, found " + std::to_string(cells.size()));
    for (std::size_t j = 0; j < cols; ++j) vals.push_back(detail::parse_cell(cells[j], path, line_no, j));
    ++rows;
  }
  require(rows > 0, path + ": no rows");
  return Eigen::Map<const Tensor2D>(vals.data(), rows, static_cast<Index>(cols));
}

// ---------------------------------------------------------------------------
// Results

struct ResultRow {
  std::string method;
  int replicate = 0;
  std::string metric;
  double value = 0.0;
  std::uint64_t seed = 0;
  double wall_time_s = 0.0;
};

inline constexpr const char* kResultsHeader = "method,replicate,metric,value,seed,wall_time_s";

inline std::string results_csv(const std::vector<ResultRow>& rows) {
  std::string out = std::string(kResultsHeader) + "\n";
  for (const auto& r : rows)
    out += r.method + "," + std::to_string(r.replicate) + "," + r.metric + "," + format_real(r.value) + "," +
           std::to_string(r.seed) + "," + format_real(r.wall_time_s) + "\n";
  return out;
}

inline void write_results(const std::vector<ResultRow>& rows, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  require(out.good(), "write_results: cannot open " + path);
  out << results_csv(rows);
  require(out.good(), "write_results: write failed for " + path);
}

inline std::vector<ResultRow> read_results(const std::string& path) {
  std::ifstream in(path);
  require(in.good(), "read_results: cannot open " + path);
  std::string line;
  require(static_cast<bool>(std::getline(in, line)) && line == kResultsHeader, path + ":1: unexpected header");
  std::vector<ResultRow> rows;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto c = detail::split_csv_line(line);
    require(c.size() == 6, path + ":" + std::to_string(line_no) + ": expected 6 fields");
    ResultRow r;
    r.method = c[0];
    r.replicate = static_cast<int>(detail::parse_cell(c[1], path, line_no, 1));
    r.metric = c[2];
    r.value = detail::parse_cell(c[3], path, line_no, 3);
    r.seed = std::stoull(c[4]);
    r.wall_time_s = detail::parse_cell(c[5], path, line_no, 5);
    rows.push_back(std::move(r));
  }
  return rows;
}

/// The result CSV without the wall-time column, for determinism checks.
inline std::string deterministic_columns(const std::vector<ResultRow>& rows) {
  std::string out;
  for (const auto& r : rows)
    out += r.method + "," + std::to_string(r.replicate) + "," + r.metric + "," + format_real(r.value) + "," +
           std::to_string(r.seed) + "\n";
  return out;
}

/// Per-method summaries in first-appearance order.
inline std::vector<std::pair<std::string, Summary>> summarize_by_method(const std::vector<ResultRow>& rows) {
  std::vector<std::string> order;
  std::map<std::string, std::vector<double>> values;
  for (const auto& r : rows) {
    if (!values.count(r.method)) order.push_back(r.method);
    values[r.method].push_back(r.value);
  }
  std::vector<std::pair<std::string, Summary>> out;
  for (const auto& m : order) out.emplace_back(m, summarize(values[m]));
  return out;
}

// ---------------------------------------------------------------------------
// Configuration

struct ExperimentConfig {
  std::string example = "1";  // "1", "2", "3", "s1" or "csv"
  Index n_s = 2000;
  Index n_0 = 300;
  Index d = 60;
  Index n_test = sim::kDefaultTestSize;
  sim::Departure departure = sim::Departure::l1;  // Example 3
  std::vector<int> sources{1, 2, 3, 4, 5, 6};     // Example 3 source subset
  std::vector<std::string> source_csv;            // csv mode
  std::string target_csv;                         // csv mode
  TaskKind csv_task = TaskKind::classification;   // csv mode, target
  TaskKind csv_source_task = TaskKind::regression;  // csv mode, sources
  TesrConfig tesr;
  std::vector<std::string> methods{"tesr", "ddr", "dnn"};
  int replications = 10;
  std::uint64_t seed = 1;
  std::string output;

  void validate() const {
    require(example == "1" || example == "2" || example == "3" || example == "s1" || example == "csv",
            "ExperimentConfig: unknown example '" + example + "' (expected 1, 2, 3, s1 or csv)");
    require(replications >= 1, "ExperimentConfig: replications must be at least 1");
    require(!methods.empty(), "ExperimentConfig: methods must be non-empty");
    for (const auto& m : methods)
      require(m == "tesr" || m == "ddr" || m == "dnn" || m == "linear_tesr",
              "ExperimentConfig: unknown method '" + m + "'");
    if (example == "csv") {
      require(!source_csv.empty() && !target_csv.empty(), "ExperimentConfig: csv mode needs source_csv and target_csv");
    } else {
      require(n_s >= 4 && n_0 >= 4 && n_test >= 1, "ExperimentConfig: sample sizes too small");
    }
    if (example == "3") {
      require(!sources.empty(), "ExperimentConfig: Example 3 needs a non-empty source list");
      for (int s : sources) require(s >= 1 && s <= 8, "ExperimentConfig: Example 3 sources must be in 1..8");
    }
    tesr.validate();
  }
};

inline ExperimentConfig default_config(const std::string& example) {
  ExperimentConfig c;
  c.example = example;
  if (example == "2") {
    c.d = 60;
  } else if (example == "3") {
    c.d = 20;
  } else if (example == "s1") {
    c.d = 60;
  }
  return c;
}

/// Parses the JSON config. Hyper-parameter keys: lambda_e, lambda_z,
/// lambda_c, lambda_e0, batch_size, rep_dim (or rc_dim/rt_dim),
/// learning_rate, weight_decay, epochs. Study keys: example, n_s, n0, d,
/// n_test, departure, sources, source_csv, target_csv, task (target),
/// source_task, methods, replications, seed, output.
inline ExperimentConfig parse_config(const nlohmann::json& j) {
  require(j.is_object(), "config: top level must be a JSON object");
  static const std::vector<std::string> known{
      "lambda_e", "lambda_z",  "lambda_c",   "lambda_e0",  "batch_size", "rep_dim", "rc_dim",      "rt_dim",
      "learning_rate", "weight_decay", "epochs", "hidden", "example", "n_s", "n0",  "d",  "n_test",
      "departure", "sources", "source_csv", "target_csv", "task", "source_task", "methods", "replications", "seed", "output"};
  for (const auto& [key, _] : j.items())
    require(std::find(known.begin(), known.end(), key) != known.end(), "config: unknown key '" + key + "'");
  std::string example = "1";
  if (j.contains("example")) {
    const auto& e = j.at("example");
    example = e.is_string() ? e.get<std::string>() : std::to_string(e.get<int>());
  }
  ExperimentConfig c = default_config(example);
  try {
    TesrConfig& t = c.tesr;
    if (j.contains("lambda_e")) t.lambda_e = j.at("lambda_e").get<double>();
    if (j.contains("lambda_z")) t.lambda_z = j.at("lambda_z").get<double>();
    if (j.contains("lambda_c")) t.lambda_c = j.at("lambda_c").get<double>();
    if (j.contains("lambda_e0")) t.lambda_e0 = j.at("lambda_e0").get<double>();
    if (j.contains("batch_size")) t.batch_size = j.at("batch_size").get<Index>();
    if (j.contains("rep_dim")) t.rc_dim = t.rt_dim = j.at("rep_dim").get<Index>();
    if (j.contains("rc_dim")) t.rc_dim = j.at("rc_dim").get<Index>();
    if (j.contains("rt_dim")) t.rt_dim = j.at("rt_dim").get<Index>();
    if (j.contains("learning_rate")) t.learning_rate = j.at("learning_rate").get<double>();
    if (j.contains("weight_decay")) t.weight_decay = j.at("weight_decay").get<double>();
    if (j.contains("epochs")) t.epochs = j.at("epochs").get<int>();
    if (j.contains("hidden")) t.hidden = j.at("hidden").get<std::vector<Index>>();
    if (j.contains("n_s")) c.n_s = j.at("n_s").get<Index>();
    if (j.contains("n0")) c.n_0 = j.at("n0").get<Index>();
    if (j.contains("d")) c.d = j.at("d").get<Index>();
    if (j.contains("n_test")) c.n_test = j.at("n_test").get<Index>();
    if (j.contains("departure")) {
      const auto dep = j.at("departure").get<std::string>();
      require(dep == "l1" || dep == "cosine", "config: departure must be 'l1' or 'cosine'");
      c.departure = dep == "l1" ? sim::Departure::l1 : sim::Departure::cosine;
    }
    if (j.contains("sources")) c.sources = j.at("sources").get<std::vector<int>>();
    if (j.contains("source_csv")) {
      const auto& s = j.at("source_csv");
      c.source_csv = s.is_string() ? std::vector<std::string>{s.get<std::string>()} : s.get<std::vector<std::string>>();
    }
    if (j.contains("target_csv")) c.target_csv = j.at("target_csv").get<std::string>();
    const auto task_of = [&](const char* key) {
      const auto task = j.at(key).get<std::string>();
      require(task == "classification" || task == "regression",
              std::string("config: ") + key + " must be classification or regression");
      return task == "regression" ? TaskKind::regression : TaskKind::classification;
    };
    if (j.contains("task")) c.csv_task = task_of("task");
    if (j.contains("source_task")) c.csv_source_task = task_of("source_task");
    if (j.contains("methods")) c.methods = j.at("methods").get<std::vector<std::string>>();
    if (j.contains("replications")) c.replications = j.at("replications").get<int>();
    if (j.contains("seed")) c.seed = j.at("seed").get<std::uint64_t>();
    if (j.contains("output")) c.output = j.at("output").get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(std::string("config: ") + e.what());
  }
  c.validate();
  return c;
}

inline ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  require(in.good(), "config: cannot open " + path);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw Error("config: " + path + ": " + e.what());
  }
  return parse_config(j);
}

// ---------------------------------------------------------------------------
// Pipelines

/// Held-out score of an already trained predictor.
inline double evaluate(const std::function<Tensor2D(const Tensor2D&)>& predict, const DomainDataset& test) {
  return score(predict(test.x), test);
}

/// One learning problem: sources, a target training sample, a test set and,
/// in csv mode, evaluation splits used for model selection.
struct Problem {
  std::vector<DomainDataset> sources;
  DomainDataset target;
  DomainDataset test;
  std::vector<DomainDataset> source_eval;  // empty: no selection
  std::optional<DomainDataset> target_eval;

  bool selecting() const { return target_eval.has_value(); }
};

namespace detail {

inline constexpr std::uint64_t kSelectSeed = 0x5e1ec7;

inline TrainOptions head_selection(const Problem& p, const Tensor2D* eval_features) {
  TrainOptions o;
  if (!p.selecting()) return o;
  o.select = [eval_features, &p](const MlpNet& head) {
    return supervised_loss(rep_forward(head, *eval_features), p.target_eval->y, p.target_eval->task).loss;
  };
  return o;
}

inline TrainOptions stage1_selection(const std::vector<DomainDataset>& eval, const TesrConfig& cfg) {
  TrainOptions o;
  if (eval.empty()) return o;
  o.select = [&eval, cfg](const MlpNet& net) {
    Rng rng(kSelectSeed);
    return source_objective(net, eval, cfg, rng).loss;
  };
  return o;
}

inline TrainOptions stage2_selection(const Problem& p, const MlpNet& rc, const TesrConfig& cfg) {
  TrainOptions o;
  if (!p.selecting()) return o;
  const Tensor2D rc_eval = rep_forward(rc, p.target_eval->x);
  const Tensor2D y_eval = response_features(*p.target_eval);
  o.select = [rc_eval, y_eval, &p, cfg](const MlpNet& net) {
    Rng rng(kSelectSeed);
    const Tensor2D gamma = gaussian_reference(rc_eval.rows(), cfg.rt_dim, rng);
    return target_loss(rep_forward(net, p.target_eval->x), rc_eval, y_eval, gamma, cfg.lambda_c, cfg.lambda_e0).loss;
  };
  return o;
}

/// Trains a head on `features` and scores it on the test features.
inline double fit_and_score_head(const Tensor2D& train_f, const Tensor2D& test_f, const Tensor2D* eval_f,
                                 const Problem& p, const TesrConfig& cfg, Rng& rng) {
  const MlpNet head = train_predictor(train_f, p.target, cfg, rng, head_selection(p, eval_f));
  return score(rep_forward(head, test_f), p.test);
}

}  // namespace detail

/// Shared-representation cache so several targets of one study reuse one
/// Stage I fit.
struct StageOneCache {
  std::optional<MlpNet> rc;
  double seconds = 0.0;
};

inline double run_tesr(const Problem& p, const TesrConfig& cfg, Rng& rng, StageOneCache* cache = nullptr) {
  StageOneCache local;
  StageOneCache& c = cache ? *cache : local;
  if (!c.rc) {
    const auto t0 = std::chrono::steady_clock::now();
    c.rc = train_stage1(p.sources, cfg, rng, detail::stage1_selection(p.source_eval, cfg));
    c.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  }
  const MlpNet& rc = *c.rc;
  const MlpNet rt = train_stage2(p.target, rc, cfg, rng, detail::stage2_selection(p, rc, cfg));
  const TesrModel model{rc, rt};
  Tensor2D eval_f;
  if (p.selecting()) eval_f = tesr_features(model, p.target_eval->x);
  return detail::fit_and_score_head(tesr_features(model, p.target.x), tesr_features(model, p.test.x),
                                    p.selecting() ? &eval_f : nullptr, p, cfg, rng);
}

inline double run_ddr(const Problem& p, const TesrConfig& cfg, Rng& rng) {
  TrainOptions sel;
  std::vector<DomainDataset> eval_set;
  if (p.selecting()) {
    eval_set.push_back(*p.target_eval);
    TesrConfig c = cfg;
    c.lambda_z = 0.0;
    sel = detail::stage1_selection(eval_set, c);
  }
  const MlpNet rep = train_ddr(p.target, cfg, rng, sel);
  Tensor2D eval_f;
  if (p.selecting()) eval_f = rep_forward(rep, p.target_eval->x);
  return detail::fit_and_score_head(rep_forward(rep, p.target.x), rep_forward(rep, p.test.x),
                                    p.selecting() ? &eval_f : nullptr, p, cfg, rng);
}

inline double run_dnn(const Problem& p, const TesrConfig& cfg, Rng& rng) {
  TrainOptions sel;
  if (p.selecting())
    sel.select = [&p](const MlpNet& net) {
      return supervised_loss(rep_forward(net, p.target_eval->x), p.target_eval->y, p.target_eval->task).loss;
    };
  const MlpNet net = train_dnn(p.target, cfg, rng, sel);
  return score(rep_forward(net, p.test.x), p.test);
}

/// Linear TESR: covariates whitened with the pooled source statistics, B_c
/// from the sources, B_t from the target, head on [X B_c, X B_t]. r_c is
/// capped at d and r_t at d - r_c (with at least one column).
inline double run_linear_tesr(const Problem& p, const TesrConfig& cfg, Rng& rng) {
  const Index d = p.target.dim();
  require(d >= 2, "linear_tesr: need at least 2 covariates");
  const Whitening w = fit_whitening(detail::stack_covariates(p.sources));
  auto whiten = [&w](DomainDataset ds) {
    ds.x = w.apply(ds.x);
    return ds;
  };
  std::vector<DomainDataset> src;
  for (const auto& s : p.sources) src.push_back(whiten(s));
  const DomainDataset tgt = whiten(p.target);
  const Index rc = std::min(cfg.rc_dim, d - 1);
  const Index rt = std::max<Index>(1, std::min(cfg.rt_dim, d - rc));
  LinearFitOptions opt;
  opt.batch_size = cfg.batch_size;
  const LinearFit bc = fit_linear_sirep(src, rc, cfg.lambda_e, cfg.lambda_z, opt, rng);
  const LinearFit bt = fit_linear_augment(tgt, bc.rep, rt, cfg.lambda_e0, cfg.lambda_c, opt, rng);
  const Tensor2D B = hconcat(bc.rep.B, bt.rep.B);
  auto features = [&](const Tensor2D& x) { return Tensor2D(w.apply(x) * B); };
  Tensor2D eval_f;
  if (p.selecting()) eval_f = features(p.target_eval->x);
  return detail::fit_and_score_head(features(p.target.x), features(p.test.x), p.selecting() ? &eval_f : nullptr, p,
                                    cfg, rng);
}

// ---------------------------------------------------------------------------
// Experiments

namespace detail {

inline std::uint64_t method_tag(const std::string& m) {
  if (m == "tesr") return 101;
  if (m == "ddr") return 102;
  if (m == "dnn") return 103;
  return 104;
}

/// Deterministic shuffled split of [0, n) into consecutive fractions.
inline std::vector<std::vector<Index>> split_indices(Index n, const std::vector<double>& fractions, Rng& rng) {
  std::vector<Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Index{0});
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<std::vector<Index>> parts;
  Index start = 0;
  double acc = 0.0;
  for (std::size_t k = 0; k < fractions.size(); ++k) {
    acc += fractions[k];
    const Index end = k + 1 == fractions.size() ? n : static_cast<Index>(std::llround(acc * static_cast<double>(n)));
    parts.emplace_back(order.begin() + start, order.begin() + end);
    start = end;
  }
  return parts;
}

/// Problems of one replicate (one per target) plus their labels.
inline std::vector<std::pair<std::string, Problem>> build_problems(const ExperimentConfig& cfg, std::uint64_t seed) {
  std::vector<std::pair<std::string, Problem>> out;
  if (cfg.example == "csv") {
    std::vector<DomainDataset> sources;
    for (const auto& path : cfg.source_csv)
      for (auto& ds : split_domains(load_csv_table(path, cfg.csv_source_task))) sources.push_back(std::move(ds));
    const DomainDataset target = load_csv_dataset(cfg.target_csv, cfg.csv_task);
    for (const auto& s : sources)
      require(s.dim() == target.dim(), "csv: source and target covariate dimensions differ");
    Rng rng = sim::make_stream(seed, 0xc5f, 0);
    Problem p;
    const auto parts = split_indices(target.size(), {0.6, 0.2, 0.2}, rng);
    p.target = target.subset(parts[0]);
    p.target_eval = target.subset(parts[1]);
    p.test = target.subset(parts[2]);
    for (auto& s : sources) {
      const auto sp = split_indices(s.size(), {0.8, 0.2}, rng);
      p.sources.push_back(s.subset(sp[0]));
      p.source_eval.push_back(s.subset(sp[1]));
    }
    out.emplace_back("", std::move(p));
    return out;
  }
  sim::GeneratedStudy st;
  if (cfg.example == "1") st = sim::gen_example1(cfg.n_s, cfg.n_0, cfg.d, seed, cfg.n_test);
  else if (cfg.example == "2") st = sim::gen_example2(cfg.n_s, cfg.n_0, cfg.d, seed, cfg.n_test);
  else if (cfg.example == "3") st = sim::gen_example3(cfg.departure, cfg.sources, cfg.n_s, cfg.n_0, cfg.d, seed, cfg.n_test);
  else st = sim::gen_exampleS1(cfg.n_s, cfg.n_0, cfg.d, seed, cfg.n_test);
  for (std::size_t t = 0; t < st.targets.size(); ++t) {
    Problem p;
    p.sources = st.sources;
    p.target = st.targets[t];
    p.test = st.tests[t];
    out.emplace_back(st.targets.size() > 1 ? "_T" + std::to_string(t + 1) : "", std::move(p));
  }
  return out;
}

}  // namespace detail

/// Called after each result row is produced.
using ProgressFn = std::function<void(const ResultRow&)>;

/// Runs every replicate r = 0..R-1 with seed = master seed + r. Every method
/// draws from its own stream derived from (seed, method, target), so results
/// do not depend on which other methods are run. With several targets the
/// Stage I fit is shared and its time is included in each TESR row.
inline std::vector<ResultRow> run_experiment(const ExperimentConfig& cfg, const ProgressFn& progress = {}) {
  cfg.validate();
  std::vector<ResultRow> rows;
  for (int r = 0; r < cfg.replications; ++r) {
    const std::uint64_t seed = cfg.seed + static_cast<std::uint64_t>(r);
    auto problems = detail::build_problems(cfg, seed);
    StageOneCache shared;
    for (std::size_t t = 0; t < problems.size(); ++t) {
      const auto& [suffix, p] = problems[t];
      for (const auto& m : cfg.methods) {
        Rng rng = sim::make_stream(seed, detail::method_tag(m), t);
        const auto t0 = std::chrono::steady_clock::now();
        double value = 0.0;
        double extra = 0.0;
        if (m == "tesr") {
          // Stage I consumes its own stream so it does not depend on the target index.
          if (!shared.rc) {
            Rng stage1 = sim::make_stream(seed, detail::method_tag(m), 1000);
            const auto s0 = std::chrono::steady_clock::now();
            shared.rc = train_stage1(p.sources, cfg.tesr, stage1, detail::stage1_selection(p.source_eval, cfg.tesr));
            shared.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - s0).count();
          }
          value = run_tesr(p, cfg.tesr, rng, &shared);
          extra = shared.seconds;
        } else if (m == "ddr") {
          value = run_ddr(p, cfg.tesr, rng);
        } else if (m == "dnn") {
          value = run_dnn(p, cfg.tesr, rng);
        } else {
          value = run_linear_tesr(p, cfg.tesr, rng);
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        ResultRow row{m + suffix, r, metric_name(p.test.task), value, seed,
                      m == "tesr" && t > 0 ? secs + extra : secs};
        if (progress) progress(row);
        rows.push_back(std::move(row));
      }
    }
  }
  return rows;
}

}  // namespace tesr

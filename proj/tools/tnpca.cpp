// tnpca: command-line front end for the semi-symmetric tensor PCA library.
//
// Exit codes: 0 success, 2 configuration, 3 file format, 4 numerical failure.

#include "tnpca/decomposer.hpp"
#include "tnpca/errors.hpp"
#include "tnpca/inference.hpp"
#include "tnpca/io.hpp"
#include "tnpca/predictor.hpp"
#include "tnpca/simulator.hpp"

#include <CLI11.hpp>

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <iostream>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using namespace tnpca;

namespace {

constexpr const char* kSpecVersion = "1.0";

struct Globals {
  std::uint64_t seed = 0;
  unsigned threads = 1;
  std::string output_dir = ".";
};

fs::path resolve_output(const Globals& g, const std::string& name) {
  const fs::path p(name);
  return p.is_absolute() ? p : fs::path(g.output_dir) / p;
}

// Every option of the app and the active subcommand, as given or defaulted.
Json resolved_config(const CLI::App& app, const CLI::App& sub) {
  Json cfg = Json::object();
  auto add = [&](const CLI::App& a) {
    for (const CLI::Option* opt : a.get_options()) {
      if (opt->get_lnames().empty()) continue;
      const std::string name = opt->get_lnames().front();
      if (name == "help" || name == "config") continue;
      if (opt->count() > 0) {
        const auto& res = opt->results();
        if (opt->get_expected_max() == 0) {
          cfg[name] = true;
        } else if (res.size() == 1 && opt->get_expected_max() <= 1) {
          cfg[name] = res.front();
        } else {
          cfg[name] = res;
        }
      } else if (opt->get_expected_max() == 0) {
        cfg[name] = false;
      } else {
        cfg[name] = opt->get_default_str();
      }
    }
  };
  add(app);
  add(sub);
  return cfg;
}

Json envelope(const CLI::App& app, const CLI::App& sub) {
  Json j;
  j["spec_version"] = kSpecVersion;
  j["command"] = sub.get_name();
  j["config"] = resolved_config(app, sub);
  return j;
}

void emit(const Globals& g, const std::string& output, const Json& j) {
  const std::string text = j.dump(2) + "\n";
  if (output.empty() || output == "-") {
    std::cout << text;
  } else {
    write_text_file(resolve_output(g, output), text);
  }
}

std::vector<double> parse_list(const std::string& text) {
  std::vector<double> out;
  std::string cell;
  std::istringstream is(text);
  while (std::getline(is, cell, ',')) {
    try {
      std::size_t used = 0;
      out.push_back(std::stod(cell, &used));
      if (used != cell.size()) throw std::invalid_argument(cell);
    } catch (const std::exception&) {
      throw InvalidInput("'" + text + "' is not a comma-separated list of numbers");
    }
  }
  return out;
}

std::vector<Index> parse_index_list(const std::string& text) {
  std::vector<Index> out;
  for (double v : parse_list(text)) {
    if (v != std::floor(v) || v < 0) throw InvalidInput("'" + text + "' must list non-negative integers");
    out.push_back(static_cast<Index>(v));
  }
  return out;
}

EmbeddingMatrix load_embedding(const std::string& path, Index k) {
  const TnDecomposition dec = tn_decomposition_from_json(read_json_file(path));
  EmbeddingMatrix emb = EmbeddingMatrix::from(dec);
  return k > 0 ? emb.truncated(k) : emb;
}

TraitVector load_trait(const CsvTable& table, const std::string& name, const std::string& kind) {
  TraitVector t;
  t.values = table.column(name);
  t.kind = trait_kind_from_string(kind);
  t.name = name;
  return t;
}

Index default_edge_count(Index p, Index requested) {
  const Index max_edges = p * (p - 1) / 2;
  return requested < 0 ? std::min<Index>(200, max_edges) : requested;
}

// --- simulate -------------------------------------------------------------------------------

struct SimulateArgs {
  Index p = 30;
  Index n = 100;
  Index k = 5;
  double snr = 1.0;
  std::string u_mode = "gaussian";
  bool plant_trait = false;
  Index trait_component = 0;
  std::vector<Index> edge = {0, 1};
  double group_effect = 2.0;
  Index null_traits = 4;
  std::string tensor_name = "tensor.sstn";
};

void add_simulate(CLI::App& app, SimulateArgs& a) {
  auto* s = app.add_subcommand("simulate", "Draw a planted low-rank semi-symmetric tensor with Wishart noise");
  s->add_option("--p", a.p, "Nodes per network");
  s->add_option("--n", a.n, "Subjects");
  s->add_option("--k", a.k, "Planted rank");
  s->add_option("--snr", a.snr, "Signal-to-noise Frobenius ratio (> 0)");
  s->add_option("--u-mode", a.u_mode, "Subject factors: gaussian or stiefel");
  s->add_flag("--plant-trait", a.plant_trait, "Tie one component's subject loadings to a trait; writes traits.csv");
  s->add_option("--trait-component", a.trait_component, "Component carrying the trait effect");
  s->add_option("--edge", a.edge, "Node pair the trait component concentrates on")->expected(2);
  s->add_option("--group-effect", a.group_effect, "Loading shift per unit trait");
  s->add_option("--null-traits", a.null_traits, "Independent noise traits written alongside");
  s->add_option("--tensor-name", a.tensor_name, "Tensor file name inside the output directory");
}

int run_simulate(const CLI::App& app, const CLI::App& sub, const Globals& g, const SimulateArgs& a) {
  SimulationConfig cfg;
  cfg.nodes = a.p;
  cfg.subjects = a.n;
  cfg.rank = a.k;
  cfg.snr = a.snr;
  cfg.u_mode = subject_factor_mode_from_string(a.u_mode);
  cfg.seed = g.seed;
  cfg.replicates = 1;
  cfg.validate();
  fs::create_directories(g.output_dir);
  std::mt19937_64 rng(g.seed);

  SimulationDraw draw;
  std::optional<PlantedTraitDraw> planted;
  if (a.plant_trait) {
    PlantedTraitConfig pc;
    pc.base = cfg;
    pc.component = a.trait_component;
    pc.edge = {a.edge.at(0), a.edge.at(1)};
    pc.effect = a.group_effect;
    pc.null_traits = a.null_traits;
    planted = generate_planted_trait(pc, rng);
    draw = planted->draw;
  } else {
    draw = generate(cfg, rng);
  }

  write_tensor_file(resolve_output(g, a.tensor_name), draw.x.tensor());
  Json truth = envelope(app, sub);
  truth["d_true"] = vector_to_json(draw.d_true);
  truth["V_true"] = matrix_to_json(draw.v_true);
  truth["U_true"] = matrix_to_json(draw.u_true);
  truth["noise_scale"] = draw.noise_scale;
  truth["signal_norm"] = draw.signal_norm;
  truth["noise_norm"] = draw.noise_norm;
  if (planted) {
    truth["trait_component"] = a.trait_component;
    truth["planted_edge"] = a.edge;
  }
  emit(g, "truth.json", truth);

  if (planted) {
    CsvTable traits;
    traits.header.push_back("planted");
    for (Index t = 0; t < a.null_traits; ++t) traits.header.push_back("null_" + std::to_string(t + 1));
    traits.values.resize(a.n, 1 + a.null_traits);
    traits.values.col(0) = planted->trait;
    for (Index t = 0; t < a.null_traits; ++t) traits.values.col(t + 1) = planted->null_traits[t];
    write_csv_table(resolve_output(g, "traits.csv"), traits);
  }
  return 0;
}

// --- decompose / reconstruct / verify ----------------------------------------------------------

struct DecomposeArgs {
  std::string input;
  Index k = 5;
  Index ku = 0;
  std::string method = "tnpca";
  double tol = 1e-9;
  int max_iter = 500;
  int restarts = 5;
  std::string output;
};

void add_decompose(CLI::App& app, DecomposeArgs& a) {
  auto* s = app.add_subcommand("decompose", "Fit TN-PCA or a Tucker baseline and write the factors as JSON");
  s->add_option("input", a.input, "Tensor file")->required();
  s->add_option("--k", a.k, "Components (node rank for Tucker)");
  s->add_option("--ku", a.ku, "Tucker subject rank (0 = same as --k)");
  s->add_option("--method", a.method, "tnpca, hosvd or hooi");
  s->add_option("--tol", a.tol, "Relative convergence tolerance");
  s->add_option("--max-iter", a.max_iter, "Iteration cap (per component for tnpca)");
  s->add_option("--restarts", a.restarts, "TN-PCA initializations per component");
  s->add_option("-o,--output", a.output, "Output JSON (default stdout)");
}

int run_decompose(const CLI::App& app, const CLI::App& sub, const Globals& g, const DecomposeArgs& a) {
  const SemiSymmetricTensor x = read_semisym_file(a.input);
  const Method method = method_from_string(a.method);
  Json out = envelope(app, sub);
  if (method == Method::kTnPca) {
    TnPcaOptions opts;
    opts.tol = a.tol;
    opts.max_iter = a.max_iter;
    opts.restarts = a.restarts;
    opts.seed = g.seed;
    out.update(to_json(tn_pca(x, a.k, opts)));
  } else {
    const Index ku = a.ku > 0 ? a.ku : a.k;
    TuckerDecomposition dec;
    if (method == Method::kHosvd) {
      dec = hosvd_semisym(x, a.k, ku);
    } else {
      HooiOptions opts;
      opts.tol = a.tol;
      opts.max_iter = a.max_iter;
      dec = hooi_semisym(x, a.k, ku, opts);
    }
    out.update(to_json(dec));
    out["method"] = to_string(method);
  }
  emit(g, a.output, out);
  return 0;
}

struct ReconstructArgs {
  std::string input;
  std::string decomposition;
  std::string output;
};

void add_reconstruct(CLI::App& app, ReconstructArgs& a) {
  auto* s = app.add_subcommand("reconstruct", "Report the relative residual of a decomposition against its tensor");
  s->add_option("input", a.input, "Tensor file")->required();
  s->add_option("--decomposition", a.decomposition, "Decomposition JSON")->required();
  s->add_option("-o,--output", a.output, "Output JSON (default stdout)");
}

int run_reconstruct(const CLI::App& app, const CLI::App& sub, const Globals& g, const ReconstructArgs& a) {
  const SemiSymmetricTensor x = read_semisym_file(a.input);
  const Json dj = read_json_file(a.decomposition);
  const SemiSymmetricTensor approx = dj.value("method", std::string()) == "tnpca"
                                         ? reconstruct(tn_decomposition_from_json(dj))
                                         : reconstruct(tucker_decomposition_from_json(dj));
  if (approx.tensor().dims() != x.tensor().dims()) throw DimensionError("decomposition does not match the tensor shape");
  const double total = frobenius_norm(x.tensor());
  const double diff = (x.tensor().flat() - approx.tensor().flat()).norm();
  Json out = envelope(app, sub);
  out["residual_norm"] = diff;
  out["relative_residual"] = total > 0.0 ? diff / total : diff;
  emit(g, a.output, out);
  return 0;
}

struct VerifyArgs {
  std::string decomposition;
  double tol = 1e-10;
  std::string output;
};

void add_verify(CLI::App& app, VerifyArgs& a) {
  auto* s = app.add_subcommand("verify", "Check that the node factors are orthonormal (exit 4 if not)");
  s->add_option("decomposition", a.decomposition, "Decomposition JSON")->required();
  s->add_option("--tol", a.tol, "Largest allowed |VᵀV - I| entry");
  s->add_option("-o,--output", a.output, "Output JSON (default stdout)");
}

int run_verify(const CLI::App& app, const CLI::App& sub, const Globals& g, const VerifyArgs& a) {
  const Json dj = read_json_file(a.decomposition);
  Eigen::MatrixXd v;
  try {
    v = matrix_from_json(dj.at("V"));
  } catch (const Json::exception& e) {
    throw FormatError(std::string("decomposition has no V: ") + e.what());
  }
  const Eigen::MatrixXd gram = v.transpose() * v;
  const double dev = (gram - Eigen::MatrixXd::Identity(v.cols(), v.cols())).cwiseAbs().maxCoeff();
  Json out = envelope(app, sub);
  out["max_deviation"] = dev;
  out["orthonormal"] = dev <= a.tol;
  emit(g, a.output, out);
  if (dev > a.tol) {
    std::ostringstream os;
    os << "node factors deviate from orthonormal by " << dev;
    throw NumericalError(os.str());
  }
  return 0;
}

// --- embed / principal-network -------------------------------------------------------------------

struct EmbedArgs {
  std::string decomposition;
  Index k = 0;
  std::string output;
};

void add_embed(CLI::App& app, EmbedArgs& a) {
  auto* s = app.add_subcommand("embed", "Write subject PC scores (rows of U) as CSV");
  s->add_option("decomposition", a.decomposition, "TN-PCA decomposition JSON")->required();
  s->add_option("--k", a.k, "Leading components to keep (0 = all)");
  s->add_option("-o,--output", a.output, "Output CSV (default stdout)");
}

int run_embed(const Globals& g, const EmbedArgs& a) {
  const EmbeddingMatrix emb = load_embedding(a.decomposition, a.k);
  CsvTable table;
  for (Index c = 0; c < emb.components(); ++c) table.header.push_back("pc" + std::to_string(c + 1));
  table.values = emb.scores;
  if (a.output.empty() || a.output == "-") {
    std::cout << format_csv_table(table);
  } else {
    write_csv_table(resolve_output(g, a.output), table);
  }
  return 0;
}

struct NetworkArgs {
  std::string decomposition;
  Index k = 0;
  Index top_edges = -1;
  std::string output;
};

void add_network(CLI::App& app, NetworkArgs& a) {
  auto* s = app.add_subcommand("principal-network", "Σ d_k v_k v_kᵀ over the leading components, with its top edges");
  s->add_option("decomposition", a.decomposition, "TN-PCA decomposition JSON")->required();
  s->add_option("--k", a.k, "Components summed (0 = all)");
  s->add_option("--top-edges", a.top_edges, "Edges listed (-1 = min(200, all))");
  s->add_option("-o,--output", a.output, "Output JSON (default stdout)");
}

int run_network(const CLI::App& app, const CLI::App& sub, const Globals& g, const NetworkArgs& a) {
  const TnDecomposition dec = tn_decomposition_from_json(read_json_file(a.decomposition));
  const Index k = a.k > 0 ? a.k : dec.components();
  const Eigen::MatrixXd net = principal_network(dec.d, dec.V, k);
  Json out = envelope(app, sub);
  out["network"] = matrix_to_json(net);
  out["top_edges"] = to_json(top_edges(net, default_edge_count(net.rows(), a.top_edges)));
  emit(g, a.output, out);
  return 0;
}

// --- test-groups -----------------------------------------------------------------------------------

struct TestGroupsArgs {
  std::string decomposition;
  std::string traits;
  std::vector<std::string> trait_names;
  Index n_per_group = 0;
  Index k = 0;
  bool per_component = false;
  std::string group_a;
  std::string group_b;
  int permutations = 1000;
  double alpha = 0.05;
  std::string output;
};

void add_test_groups(CLI::App& app, TestGroupsArgs& a) {
  auto* s = app.add_subcommand("test-groups", "MMD permutation tests between trait-extreme groups, with BH-FDR");
  s->add_option("--decomposition", a.decomposition, "TN-PCA decomposition JSON (trait mode)");
  s->add_option("--traits", a.traits, "Trait CSV with a header row, one row per subject");
  s->add_option("--trait", a.trait_names, "Trait columns to test (default: all)");
  s->add_option("--n-per-group", a.n_per_group, "Subjects per extreme group (0 = a third of observed)");
  s->add_option("--k", a.k, "Leading components used (0 = all)");
  s->add_flag("--per-component", a.per_component, "Test every component's scores separately");
  s->add_option("--group-a", a.group_a, "CSV of embedded rows for group A (direct mode)");
  s->add_option("--group-b", a.group_b, "CSV of embedded rows for group B (direct mode)");
  s->add_option("--permutations", a.permutations, "Label permutations per test");
  s->add_option("--alpha", a.alpha, "FDR level");
  s->add_option("-o,--output", a.output, "Output JSON (default stdout)");
}

int run_test_groups(const CLI::App& app, const CLI::App& sub, const Globals& g, const TestGroupsArgs& a) {
  std::mt19937_64 rng(g.seed);
  MmdOptions mo;
  mo.permutations = a.permutations;
  mo.threads = g.threads;
  Json out = envelope(app, sub);

  const bool direct = !a.group_a.empty() || !a.group_b.empty();
  if (direct) {
    if (a.group_a.empty() || a.group_b.empty()) throw InvalidInput("direct mode needs both --group-a and --group-b");
    if (!a.decomposition.empty() || !a.traits.empty()) {
      throw InvalidInput("--group-a/--group-b cannot be combined with --decomposition/--traits");
    }
    const TestResult r = mmd_test(read_csv_matrix(a.group_a), read_csv_matrix(a.group_b), rng, mo);
    out["result"] = to_json(r);
    const FdrResult fdr = fdr_bh({r.p_value}, a.alpha);
    out["result"]["rejected"] = static_cast<bool>(fdr.rejected[0]);
    emit(g, a.output, out);
    return 0;
  }

  if (a.decomposition.empty() || a.traits.empty()) {
    throw InvalidInput("give --decomposition and --traits, or --group-a and --group-b");
  }
  const EmbeddingMatrix emb = load_embedding(a.decomposition, a.k);
  const CsvTable table = read_csv_table(a.traits);
  if (table.values.rows() != emb.subjects()) throw DimensionError("trait rows must equal the subject count");
  const std::vector<std::string> names = a.trait_names.empty() ? table.header : a.trait_names;

  Json tests = Json::array();
  std::vector<double> pvals;
  for (const std::string& name : names) {
    const TraitVector trait = load_trait(table, name, "continuous");
    const Index n_obs = static_cast<Index>(trait.observed().size());
    const Index n = a.n_per_group > 0 ? a.n_per_group : n_obs / 3;
    const GroupSplit groups = extreme_groups(trait, n, rng);
    std::vector<Index> cols;
    if (a.per_component) {
      for (Index c = 0; c < emb.components(); ++c) cols.push_back(c);
    } else {
      cols.push_back(-1);
    }
    for (Index c : cols) {
      const Eigen::MatrixXd scores = c < 0 ? emb.scores : Eigen::MatrixXd(emb.scores.col(c));
      const TestResult r = mmd_test(scores(groups.low, Eigen::all), scores(groups.high, Eigen::all), rng, mo);
      Json entry = to_json(r);
      entry["trait"] = name;
      if (c >= 0) entry["component"] = c;
      entry["low"] = groups.low;
      entry["high"] = groups.high;
      tests.push_back(std::move(entry));
      pvals.push_back(r.p_value);
    }
  }
  const FdrResult fdr = fdr_bh(pvals, a.alpha);
  for (std::size_t i = 0; i < pvals.size(); ++i) tests[i]["rejected"] = static_cast<bool>(fdr.rejected[i]);
  out["tests"] = tests;
  out["fdr"] = {{"alpha", a.alpha}, {"threshold", fdr.threshold}, {"rejections", fdr.rejections}};
  emit(g, a.output, out);
  return 0;
}

// --- direction -----------------------------------------------------------------------------------

struct DirectionArgs {
  std::string decomposition;
  std::string traits;
  std::string trait;
  std::string kind = "continuous";
  std::string method = "cca";
  std::string covariates;
  Index n_per_group = 0;
  Index k = 0;
  std::optional<double> ridge;
  Index top_edges = -1;
  std::string output;
};

void add_direction(CLI::App& app, DirectionArgs& a) {
  auto* s = app.add_subcommand("direction", "Trait direction in embedding space mapped back to edges (Δ_net)");
  s->add_option("--decomposition", a.decomposition, "TN-PCA decomposition JSON")->required();
  s->add_option("--traits", a.traits, "Trait CSV with a header row")->required();
  s->add_option("--trait", a.trait, "Trait column")->required();
  s->add_option("--kind", a.kind, "continuous, ordinal or categorical");
  s->add_option("--method", a.method, "cca or lda");
  s->add_option("--covariates", a.covariates, "Headerless covariate CSV regressed out of the trait (cca)");
  s->add_option("--n-per-group", a.n_per_group,
                "Extreme-group size; cca uses a median split when 0, lda uses a third of observed");
  s->add_option("--k", a.k, "Leading components used (0 = all)");
  s->add_option("--ridge", a.ridge, "LDA ridge (default 1e-6·trace/K)");
  s->add_option("--top-edges", a.top_edges, "Edges listed (-1 = min(200, all))");
  s->add_option("-o,--output", a.output, "Output JSON (default stdout)");
}

int run_direction(const CLI::App& app, const CLI::App& sub, const Globals& g, const DirectionArgs& a) {
  std::mt19937_64 rng(g.seed);
  const EmbeddingMatrix emb = load_embedding(a.decomposition, a.k);
  const CsvTable table = read_csv_table(a.traits);
  if (table.values.rows() != emb.subjects()) throw DimensionError("trait rows must equal the subject count");
  const TraitVector trait = load_trait(table, a.trait, a.kind);
  const Index n_obs = static_cast<Index>(trait.observed().size());

  Direction dir;
  if (a.method == "cca") {
    std::optional<Eigen::MatrixXd> cov;
    if (!a.covariates.empty()) cov = read_csv_matrix(a.covariates);
    std::optional<GroupSplit> groups;
    if (a.n_per_group > 0) groups = extreme_groups(trait, a.n_per_group, rng);
    dir = cca_direction(emb, trait, cov, groups);
  } else if (a.method == "lda") {
    if (!a.covariates.empty()) throw InvalidInput("--covariates applies to the cca method only");
    const GroupSplit groups = extreme_groups(trait, a.n_per_group > 0 ? a.n_per_group : n_obs / 3, rng);
    LdaOptions lo;
    lo.ridge = a.ridge;
    dir = lda_direction(emb, groups.low, groups.high, lo, a.trait);
  } else {
    throw InvalidInput("unknown direction method '" + a.method + "'");
  }
  Json out = envelope(app, sub);
  out.update(to_json(dir));
  out["top_edges"] = to_json(top_edges(dir.delta_net, default_edge_count(dir.delta_net.rows(), a.top_edges)));
  out["subject_projection"] = vector_to_json(emb.scores * dir.w);
  emit(g, a.output, out);
  return 0;
}

// --- predict / identify ------------------------------------------------------------------------------

struct PredictArgs {
  std::string decomposition;
  std::string traits;
  std::string trait;
  std::string kind = "continuous";
  std::string covariates;
  std::string fractions = "0.66,0.17,0.17";
  std::string k_grid = "5,10,20,30,40,60";
  int repeats = 10;
  std::string output;
};

void add_predict(CLI::App& app, PredictArgs& a) {
  auto* s = app.add_subcommand("predict", "Baseline vs PC-score models and the improvement ratio rho");
  s->add_option("--decomposition", a.decomposition, "TN-PCA decomposition JSON")->required();
  s->add_option("--traits", a.traits, "Trait CSV with a header row")->required();
  s->add_option("--trait", a.trait, "Trait column")->required();
  s->add_option("--kind", a.kind, "continuous, ordinal or categorical");
  s->add_option("--covariates", a.covariates, "Headerless covariate CSV");
  s->add_option("--fractions", a.fractions, "Train,validation,test fractions");
  s->add_option("--k-grid", a.k_grid, "Candidate K values (those above the component count are skipped)");
  s->add_option("--repeats", a.repeats, "Random splits averaged (seeded seed, seed+1, ...)");
  s->add_option("-o,--output", a.output, "Output JSON (default stdout)");
}

int run_predict(const CLI::App& app, const CLI::App& sub, const Globals& g, const PredictArgs& a) {
  const EmbeddingMatrix emb = load_embedding(a.decomposition, 0);
  const CsvTable table = read_csv_table(a.traits);
  if (table.values.rows() != emb.subjects()) throw DimensionError("trait rows must equal the subject count");
  const TraitVector trait = load_trait(table, a.trait, a.kind);
  std::optional<Eigen::MatrixXd> cov;
  if (!a.covariates.empty()) cov = read_csv_matrix(a.covariates);
  const std::vector<double> f = parse_list(a.fractions);
  if (f.size() != 3) throw InvalidInput("--fractions needs three values");
  EvaluateOptions eo;
  eo.k_grid = parse_index_list(a.k_grid);

  const RepeatedPrediction rep = evaluate_trait_repeated(emb, trait, cov, {f[0], f[1], f[2]}, g.seed, a.repeats, eo);
  Json out = envelope(app, sub);
  out["rho_mean"] = rep.rho_mean;
  out["rho_std"] = rep.rho_std;
  Json runs = Json::array();
  for (const auto& r : rep.runs) {
    Json j = to_json(r);
    if (trait.kind == TraitKind::kOrdinal) {
      Json means = Json::array();
      for (const auto& [level, mean] : predicted_group_means(r)) means.push_back({{"level", level}, {"mean", mean}});
      j["group_means"] = means;
    }
    runs.push_back(std::move(j));
  }
  out["runs"] = runs;
  emit(g, a.output, out);
  return 0;
}

struct IdentifyArgs {
  std::string decomposition;
  std::string labels;
  Index k = 10;
  std::string output;
};

void add_identify(CLI::App& app, IdentifyArgs& a) {
  auto* s = app.add_subcommand("identify", "Nearest-neighbor identification of repeated scans");
  s->add_option("--decomposition", a.decomposition, "TN-PCA decomposition JSON")->required();
  s->add_option("--labels", a.labels, "CSV with columns subject,scan per slice; scan 0 is the gallery")->required();
  s->add_option("--k", a.k, "Leading components used");
  s->add_option("-o,--output", a.output, "Output JSON (default stdout)");
}

int run_identify(const CLI::App& app, const CLI::App& sub, const Globals& g, const IdentifyArgs& a) {
  const EmbeddingMatrix emb = load_embedding(a.decomposition, 0);
  const CsvTable labels = read_csv_table(a.labels);
  if (labels.values.rows() != emb.subjects()) throw DimensionError("label rows must equal the slice count");
  const Eigen::VectorXd subject = labels.column("subject");
  const Eigen::VectorXd scan = labels.column("scan");
  std::vector<Index> gallery_rows, probe_rows, gallery_labels, probe_labels;
  for (Index i = 0; i < subject.size(); ++i) {
    if (!std::isfinite(subject(i)) || !std::isfinite(scan(i))) throw InvalidInput("labels must be complete");
    if (scan(i) == 0.0) {
      gallery_rows.push_back(i);
      gallery_labels.push_back(static_cast<Index>(subject(i)));
    } else {
      probe_rows.push_back(i);
      probe_labels.push_back(static_cast<Index>(subject(i)));
    }
  }
  const IdentificationReport r = identify_subjects(emb.scores(gallery_rows, Eigen::all), gallery_labels,
                                                   emb.scores(probe_rows, Eigen::all), probe_labels, a.k);
  Json out = envelope(app, sub);
  out.update(to_json(r));
  out["probe_rows"] = probe_rows;
  emit(g, a.output, out);
  return 0;
}

// --- ingest / study --------------------------------------------------------------------------------

struct IngestArgs {
  std::vector<std::string> csvs;
  std::string output = "tensor.sstn";
};

void add_ingest(CLI::App& app, IngestArgs& a) {
  auto* s = app.add_subcommand("ingest", "Stack per-subject adjacency CSVs into a tensor file");
  s->add_option("csv", a.csvs, "One P x P CSV per subject")->required();
  s->add_option("-o,--output", a.output, "Tensor file");
}

int run_ingest(const Globals& g, const IngestArgs& a) {
  std::vector<fs::path> paths(a.csvs.begin(), a.csvs.end());
  const SemiSymmetricTensor x = load_adjacency_csv(paths);
  write_tensor_file(resolve_output(g, a.output), x.tensor());
  return 0;
}

struct StudyArgs {
  Index p = 30;
  Index n = 100;
  std::string snrs = "0.25,0.5,1,2,4";
  std::string ranks = "5";
  std::vector<std::string> methods = {"tnpca", "hosvd", "hooi"};
  int replicates = 10;
  std::string u_mode = "gaussian";
  std::string output;
};

void add_study(CLI::App& app, StudyArgs& a) {
  auto* s = app.add_subcommand("study", "Core-error and variance-explained study over an SNR grid");
  s->add_option("--p", a.p, "Nodes");
  s->add_option("--n", a.n, "Subjects");
  s->add_option("--snrs", a.snrs, "SNR grid");
  s->add_option("--ranks", a.ranks, "Rank grid");
  s->add_option("--methods", a.methods, "Methods compared");
  s->add_option("--replicates", a.replicates, "Draws per SNR");
  s->add_option("--u-mode", a.u_mode, "Subject factors: gaussian or stiefel");
  s->add_option("-o,--output", a.output, "Output JSON (default stdout)");
}

int run_study(const CLI::App& app, const CLI::App& sub, const Globals& g, const StudyArgs& a) {
  SimulationConfig base;
  base.nodes = a.p;
  base.subjects = a.n;
  base.seed = g.seed;
  base.replicates = a.replicates;
  base.u_mode = subject_factor_mode_from_string(a.u_mode);
  StudyGrid grid;
  grid.snrs = parse_list(a.snrs);
  grid.ranks = parse_index_list(a.ranks);
  grid.methods.clear();
  for (const auto& m : a.methods) grid.methods.push_back(method_from_string(m));
  StudyOptions so;
  so.threads = g.threads;
  so.tnpca.seed = g.seed;
  const SimulationReport report = tnpca::run_study(grid, base, so);

  Json out = envelope(app, sub);
  Json cells = Json::array();
  for (const StudyCell& c : report.cells) {
    cells.push_back({{"method", to_string(c.method)},
                     {"snr", c.snr},
                     {"rank", c.rank},
                     {"core_errors", c.core_errors},
                     {"core_error_mean", c.core_error_mean},
                     {"core_error_std", c.core_error_std},
                     {"variance_mean", c.variance_mean},
                     {"variance_std", c.variance_std},
                     {"failures", c.failures}});
  }
  out["cells"] = cells;
  emit(g, a.output, out);
  return 0;
}

void print_error(const std::string& kind, const std::string& message) {
  Json j = {{"error", kind}, {"message", message}};
  std::cerr << j.dump() << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Semi-symmetric tensor PCA for populations of networks"};
  app.option_defaults()->always_capture_default();
  app.set_config("--config", "", "TOML config file; unknown keys are rejected");
  app.allow_config_extras(false);
  app.require_subcommand(1);

  Globals g;
  app.add_option("--seed", g.seed, "Seed for the command's random generator");
  app.add_option("--threads", g.threads, "Worker threads")->check(CLI::PositiveNumber);
  app.add_option("--output-dir", g.output_dir, "Directory for written artifacts");

  SimulateArgs sim;
  DecomposeArgs dec;
  ReconstructArgs rec;
  VerifyArgs ver;
  EmbedArgs emb;
  NetworkArgs net;
  TestGroupsArgs tg;
  DirectionArgs dir;
  PredictArgs pred;
  IdentifyArgs ident;
  IngestArgs ing;
  StudyArgs study;
  add_simulate(app, sim);
  add_decompose(app, dec);
  add_reconstruct(app, rec);
  add_verify(app, ver);
  add_embed(app, emb);
  add_network(app, net);
  add_test_groups(app, tg);
  add_direction(app, dir);
  add_predict(app, pred);
  add_identify(app, ident);
  add_ingest(app, ing);
  add_study(app, study);
  for (CLI::App* s : app.get_subcommands({})) s->allow_config_extras(false);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    print_error("config", e.what());
    return 2;
  }

  const CLI::App& sub = *app.get_subcommands().front();
  const std::string name = sub.get_name();
  try {
    if (name == "simulate") return run_simulate(app, sub, g, sim);
    if (name == "decompose") return run_decompose(app, sub, g, dec);
    if (name == "reconstruct") return run_reconstruct(app, sub, g, rec);
    if (name == "verify") return run_verify(app, sub, g, ver);
    if (name == "embed") return run_embed(g, emb);
    if (name == "principal-network") return run_network(app, sub, g, net);
    if (name == "test-groups") return run_test_groups(app, sub, g, tg);
    if (name == "direction") return run_direction(app, sub, g, dir);
    if (name == "predict") return run_predict(app, sub, g, pred);
    if (name == "identify") return run_identify(app, sub, g, ident);
    if (name == "ingest") return run_ingest(g, ing);
    if (name == "study") return run_study(app, sub, g, study);
  } catch (const AsymmetryError& e) {
    print_error("format", e.what());
    return 3;
  } catch (const FormatError& e) {
    print_error("format", e.what());
    return 3;
  } catch (const NumericalError& e) {
    print_error("numerical", e.what());
    return 4;
  } catch (const std::invalid_argument& e) {
    print_error("config", e.what());
    return 2;
  } catch (const fs::filesystem_error& e) {
    print_error("format", e.what());
    return 3;
  }
  return 0;
}

#pragma once

// Command-line driver. run() is separate from main() so tests can call it
// in-process.
//
// Exit codes: 0 success, 1 internal or numeric failure, 2 usage or input error.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "embc/embc.hpp"

namespace embc::cli {

inline constexpr int kOk = 0;
inline constexpr int kFailure = 1;
inline constexpr int kUsage = 2;

namespace detail {

inline std::string percent(double fraction) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f%%", 100.0 * fraction);
  return buf;
}

// Every output file gets a "<path>.run" sidecar holding the options that
// produced it.
inline void write_run_record(const std::string& output, const std::string& command, const CLI::App& sub) {
  std::ofstream out(output + ".run", std::ios::trunc);
  if (!out) throw InputError("cannot write run record for " + output);
  out << "command=" << command << '\n' << sub.config_to_str(true, false);
}

inline void require_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputError("input not found: " + path);
}

// Loads any evaluable file: text/EMB1 embeddings, LQE1 (dequantized),
// SNE1 (reconstruction, or raw codes), LSH1 signatures.
inline std::unique_ptr<eval::Representation> load_representation(const std::string& path, bool raw_codes) {
  require_file(path);
  const std::string magic = io::sniff_magic(path);
  if (magic == "LQE1") return std::make_unique<eval::DenseRepresentation>(lloyd::dequantize(lloyd::read_lqe(path)));
  if (magic == "SNE1") {
    const SparseEncoding enc = codec::read_file(path).to_encoding();
    if (raw_codes) return std::make_unique<eval::DenseRepresentation>(enc.codes_as_embedding());
    return std::make_unique<eval::DenseRepresentation>(enc.reconstruct());
  }
  if (magic == "LSH1") return std::make_unique<eval::SignatureRepresentation>(lsh::read_signatures(path));
  if (magic == "WTA1") throw InputError(path + " is a model checkpoint; encode an embedding with it first");
  return std::make_unique<eval::DenseRepresentation>(load_any(path));
}

}  // namespace detail

inline int run(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  CLI::App app{"embc: compress word embeddings and evaluate the results"};
  app.set_config("--config", "", "key=value file supplying option defaults");
  app.require_subcommand(1);

  // quantize / dequantize
  std::string q_in, q_out;
  std::size_t q_levels = 8, q_iters = 100;
  auto* quantize = app.add_subcommand("quantize", "per-dimension Lloyd level quantization -> LQE1");
  quantize->add_option("input", q_in, "embedding (text or EMB1)")->required();
  quantize->add_option("-o,--output", q_out, "LQE1 output")->required();
  quantize->add_option("--levels", q_levels, "levels per dimension")->capture_default_str()->check(CLI::Range(1, 65535));
  quantize->add_option("--max-iters", q_iters, "Lloyd iteration cap")->capture_default_str();

  std::string dq_in, dq_out;
  auto* dequantize = app.add_subcommand("dequantize", "LQE1 -> text embedding");
  dequantize->add_option("input", dq_in, "LQE1 file")->required();
  dequantize->add_option("-o,--output", dq_out, "text output")->required();

  // train
  std::string t_in, t_out, t_recon, t_checkpoint, t_log;
  wta::TrainConfig tc;
  std::size_t t_budget = 900;
  std::optional<double> t_alpha;
  auto* train = app.add_subcommand("train", "train the sparse autoencoder -> SNE1 + reconstruction");
  train->add_option("input", t_in, "embedding (text or EMB1)")->required();
  train->add_option("-o,--output", t_out, "SNE1 output")->required();
  train->add_option("--k", tc.k, "code dimensionality (power of two)")->capture_default_str();
  train->add_option("--budget-bits", t_budget, "per-word bit budget")->capture_default_str();
  train->add_option("--alpha", t_alpha, "sparsity override (default: derived from the budget)");
  train->add_option("--epochs", tc.epochs, "maximum epochs")->capture_default_str();
  train->add_option("--seed", tc.seed, "random seed")->capture_default_str();
  train->add_option("--batch-size", tc.batch_size, "minibatch size")->capture_default_str();
  train->add_option("--hidden-mult", tc.hidden_mult, "hidden width as a multiple of d")->capture_default_str();
  train->add_option("--bisect-iters", tc.bisect_iters, "hurdle bisection steps")->capture_default_str();
  train->add_option("--lr", tc.adam.step_size, "Adam step size")->capture_default_str();
  train->add_option("--stop-sigma", tc.stop_sigma, "stop once sigma reaches this (0 = run all epochs)")
      ->capture_default_str();
  train->add_option("--recon", t_recon, "reconstruction text output (default <output>.recon.txt)");
  train->add_option("--checkpoint", t_checkpoint, "WTA1 checkpoint output");
  train->add_option("--log", t_log, "training log (default <output>.log)");

  // encode / decode
  std::string e_model, e_in, e_out;
  std::size_t e_budget = 900;
  auto* encode = app.add_subcommand("encode", "encode an embedding with a trained WTA1 model -> SNE1");
  encode->add_option("--model", e_model, "WTA1 checkpoint")->required();
  encode->add_option("input", e_in, "embedding (text or EMB1)")->required();
  encode->add_option("-o,--output", e_out, "SNE1 output")->required();
  encode->add_option("--budget-bits", e_budget, "per-word bit budget recorded in the file")->capture_default_str();

  std::string d_in, d_out;
  bool d_raw = false;
  auto* decode = app.add_subcommand("decode", "SNE1 -> text embedding (reconstruction or raw codes)");
  decode->add_option("input", d_in, "SNE1 file")->required();
  decode->add_option("-o,--output", d_out, "text output")->required();
  decode->add_flag("--raw-codes", d_raw, "write the sparse codes instead of the reconstruction");

  // evaluation
  std::string v_in, v_task;
  std::vector<std::string> v_datasets;
  std::string v_method = "both";
  bool v_raw = false, v_lower = false;
  auto add_eval_options = [&](CLI::App* sub, bool with_task) {
    sub->add_option("input", v_in, "text/EMB1 embedding, LQE1, SNE1 or LSH1 file")->required();
    if (with_task) sub->add_option("--task", v_task, "sim or analogy")->required();
    sub->add_option("--dataset", v_datasets, "dataset file (repeatable)")->required();
    sub->add_option("--method", v_method, "analogy method: add, mul or both")->capture_default_str();
    sub->add_flag("--raw-codes", v_raw, "evaluate SNE1 codes directly instead of the reconstruction");
    sub->add_flag("--lowercase", v_lower, "lowercase dataset tokens");
  };
  auto* eval_cmd = app.add_subcommand("eval", "evaluate a representation");
  add_eval_options(eval_cmd, true);
  auto* eval_sim = app.add_subcommand("eval-sim", "word similarity (Spearman rho)");
  add_eval_options(eval_sim, false);
  auto* eval_analogy = app.add_subcommand("eval-analogy", "word analogy (3CosAdd / 3CosMul)");
  add_eval_options(eval_analogy, false);

  // lsh
  std::string l_in, l_out;
  std::size_t l_bits = 900;
  std::uint64_t l_seed = 1;
  auto* lsh_cmd = app.add_subcommand("lsh", "random-hyperplane signatures -> LSH1");
  lsh_cmd->add_option("input", l_in, "embedding (text or EMB1)")->required();
  lsh_cmd->add_option("-o,--output", l_out, "LSH1 output")->required();
  lsh_cmd->add_option("--bits", l_bits, "signature length")->capture_default_str()->check(CLI::Range(1, 65535));
  lsh_cmd->add_option("--seed", l_seed, "hyperplane seed")->capture_default_str();

  // interpret
  std::string i_in, i_word;
  std::size_t i_dims = 7, i_top = 7;
  auto* interpret = app.add_subcommand("interpret", "top words in the dimensions where a word is strongest");
  interpret->add_option("input", i_in, "SNE1 file")->required();
  interpret->add_option("--word", i_word, "probe word")->required();
  interpret->add_option("--dims", i_dims, "number of dimensions")->capture_default_str();
  interpret->add_option("--top", i_top, "words per dimension")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return kOk;
  } catch (const CLI::CallForAllHelp& e) {
    out << app.help("", CLI::AppFormatMode::All);
    return kOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << '\n';
    return kUsage;
  }

  try {
    configure_threads();

    if (*quantize) {
      detail::require_file(q_in);
      const Embedding e = load_any(q_in);
      lloyd::FitOptions opt;
      opt.max_iters = q_iters;
      const auto q = lloyd::quantize(e, q_levels, opt);
      lloyd::write_lqe(q, q_out);
      detail::write_run_record(q_out, "quantize", *quantize);
      out << "quantized " << q.size() << " x " << q.dim() << " to " << q_levels << " levels: "
          << q.payload_bits_per_word() << " bits/word\n";
      return kOk;
    }

    if (*dequantize) {
      detail::require_file(dq_in);
      save_text(lloyd::dequantize(lloyd::read_lqe(dq_in)), dq_out);
      detail::write_run_record(dq_out, "dequantize", *dequantize);
      return kOk;
    }

    if (*train) {
      detail::require_file(t_in);
      const Embedding e = load_any(t_in);
      codec::BudgetSpec spec;
      spec.n_bits = t_budget;
      spec.k = tc.k;
      spec.validate();
      tc.alpha = t_alpha ? *t_alpha : spec.alpha();
      out << "alpha = " << detail::percent(tc.alpha) << (t_alpha ? " (override)" : " (from budget)") << '\n';
      tc.validate();

      const std::string log_path = t_log.empty() ? t_out + ".log" : t_log;
      std::ofstream log(log_path, std::ios::trunc);
      if (!log) throw InputError("cannot open log: " + log_path);
      log << "epoch\tmean_error\tsigma\talpha_t\tbeta_t\tsparsity\n";
      auto result = wta::train(e, tc, [&log](const wta::EpochLog& l) {
        char buf[160];
        std::snprintf(buf, sizeof buf, "%zu\t%.6g\t%.4f\t%.6f\t%.6f\t%.6f\n", l.epoch, l.mean_error, l.sigma,
                      l.alpha_t, l.beta_t, l.sparsity);
        log << buf;
      });

      codec::WriteStats stats;
      codec::write_file(codec::make_code_file(result.encoding, spec, &stats), t_out);
      detail::write_run_record(t_out, "train", *train);
      const std::string recon_path = t_recon.empty() ? t_out + ".recon.txt" : t_recon;
      save_text(result.reconstruction, recon_path);
      detail::write_run_record(recon_path, "train", *train);
      if (!t_checkpoint.empty()) {
        wta::write_checkpoint({tc, result.schedule, result.params}, t_checkpoint);
        detail::write_run_record(t_checkpoint, "train", *train);
      }
      const auto& last = result.log.back();
      out << "epochs " << last.epoch << ", final error " << last.mean_error << ", sigma " << last.sigma
          << ", non-zero fraction " << detail::percent(result.encoding.nonzero_fraction()) << '\n';
      if (stats.truncated_words > 0)
        err << "warning: " << stats.truncated_words << " words had more than 255 non-zeros; smallest dropped\n";
      if (stats.over_budget)
        err << "warning: mean non-zero count " << stats.mean_count << " exceeds the budget's " << spec.alpha() * spec.k
            << '\n';
      return kOk;
    }

    if (*encode) {
      detail::require_file(e_model);
      detail::require_file(e_in);
      const auto ck = wta::read_checkpoint(e_model);
      const Embedding e = load_any(e_in);
      auto enc = wta::encode_embedding(ck.params, e, ck.schedule, ck.config.batch_size, ck.config.bisect_iters,
                                       ck.config.bn_epsilon);
      codec::BudgetSpec spec;
      spec.n_bits = e_budget;
      spec.k = ck.config.k;
      codec::WriteStats stats;
      codec::write_file(codec::make_code_file(enc.encoding, spec, &stats), e_out);
      detail::write_run_record(e_out, "encode", *encode);
      out << "encoded " << e.size() << " words, mean non-zeros " << stats.mean_count << '\n';
      return kOk;
    }

    if (*decode) {
      detail::require_file(d_in);
      const SparseEncoding enc = codec::read_file(d_in).to_encoding();
      save_text(d_raw ? enc.codes_as_embedding() : enc.reconstruct(), d_out);
      detail::write_run_record(d_out, "decode", *decode);
      return kOk;
    }

    if (*eval_cmd || *eval_sim || *eval_analogy) {
      std::string task = v_task;
      if (*eval_sim) task = "sim";
      if (*eval_analogy) task = "analogy";
      if (task != "sim" && task != "analogy") {
        err << "error: unknown task '" << task << "' (expected sim or analogy)\n";
        return kUsage;
      }
      std::vector<eval::AnalogyMethod> methods;
      if (v_method == "add" || v_method == "both") methods.push_back(eval::AnalogyMethod::add);
      if (v_method == "mul" || v_method == "both") methods.push_back(eval::AnalogyMethod::mul);
      if (methods.empty()) {
        err << "error: unknown method '" << v_method << "' (expected add, mul or both)\n";
        return kUsage;
      }
      for (const auto& ds : v_datasets) detail::require_file(ds);
      const auto rep = detail::load_representation(v_in, v_raw);
      std::vector<eval::EvalReport> reports;
      for (const auto& path : v_datasets) {
        if (task == "sim") {
          reports.push_back(eval::eval_similarity(*rep, eval::load_similarity(path, v_lower)));
        } else {
          auto r = eval::eval_analogy(*rep, eval::load_analogy(path, v_lower), methods);
          reports.insert(reports.end(), r.begin(), r.end());
        }
      }
      out << eval::format_table(reports);
      for (const auto& r : reports) out << eval::machine_line(r) << '\n';
      return kOk;
    }

    if (*lsh_cmd) {
      detail::require_file(l_in);
      const Embedding e = load_any(l_in);
      std::size_t zeros = 0;
      lsh::write_signatures(lsh::hash_embedding(e, l_bits, l_seed, &zeros), l_out);
      detail::write_run_record(l_out, "lsh", *lsh_cmd);
      if (zeros > 0) err << "warning: " << zeros << " zero vectors hashed to all-zero signatures\n";
      out << "hashed " << e.size() << " words to " << l_bits << " bits (seed " << l_seed << ")\n";
      return kOk;
    }

    if (*interpret) {
      detail::require_file(i_in);
      const SparseEncoding enc = codec::read_file(i_in).to_encoding();
      for (const auto& dim : eval::interpret(enc, i_word, i_dims, i_top)) {
        out << dim.dimension << '\t';
        for (std::size_t i = 0; i < dim.top.size(); ++i) out << (i ? ", " : "") << dim.top[i].first;
        out << '\n';
      }
      return kOk;
    }
  } catch (const eval::EvalError& e) {
    err << "error: " << e.what() << " (coverage " << detail::percent(e.coverage()) << ")\n";
    return kUsage;
  } catch (const InputError& e) {
    err << "error: " << e.what() << '\n';
    return kUsage;
  } catch (const std::exception& e) {
    err << "failure: " << e.what() << '\n';
    return kFailure;
  }
  return kUsage;
}

}  // namespace embc::cli

/**
 * @file experiment.hpp
 * @brief Config-driven gen -> train -> eval runs and their report files.
 *
 * Files written into the output directory:
 *   manifest.txt          canonical config and its CRC32 hash
 *   data/                 generated dataset (unless data.dir is given)
 *   <model>.fmw           checkpoints
 *   curve_<run>.csv       training losses
 *   results.csv           one row per evaluated setting
 *   plot_budget_rho.csv   bit budget vs Rho (feedback and joint tasks)
 *   plot_snr_nmse.csv     SNR vs NMSE, model and LS side by side
 *   timing.txt            wall-clock seconds; the only non-deterministic file
 */
#pragma once

#include <chrono>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include "flowmat/common/binary_io.hpp"
#include "flowmat/eval/metrics.hpp"
#include "flowmat/model/checkpoint.hpp"
#include "flowmat/training/trainer.hpp"

namespace flowmat::eval {

enum class Task { estimate, feedback, joint };

inline const char* to_string(Task t) {
  switch (t) {
    case Task::estimate: return "estimate";
    case Task::feedback: return "feedback";
    case Task::joint: return "joint";
  }
  return "?";
}
inline Task parse_task(const std::string& s) {
  if (s == "estimate") return Task::estimate;
  if (s == "feedback") return Task::feedback;
  if (s == "joint") return Task::joint;
  throw ConfigError("unknown task: " + s);
}

// Estimation trains progressive or joint; the composed task trains splited or
// end_to_end. Feedback alone has a single regime and ignores the key.
inline void check_regime(Task task, train::Regime regime) {
  const bool est_regime = regime == train::Regime::progressive || regime == train::Regime::joint;
  if (task == Task::estimate && !est_regime)
    throw ConfigError(std::string("task estimate cannot use regime ") + train::to_string(regime));
  if (task == Task::joint && est_regime)
    throw ConfigError(std::string("task joint needs regime splited or end_to_end, got ") +
                      train::to_string(regime));
}

struct ExperimentSettings {
  Task task = Task::feedback;
  std::vector<std::uint64_t> budgets{64, 128, 256};
  std::vector<std::uint64_t> budget_bits{2, 2, 4};  // B for each budget
  std::vector<double> snrs{0, 5, 10, 15, 20};
  std::string data_dir;  // empty: generate into <out>/data

  static ExperimentSettings from_key_values(const KeyValues& kv) {
    ExperimentSettings s;
    s.task = parse_task(kv.get_string("eval.task", to_string(s.task)));
    s.budgets = kv.get_uint_list("eval.budgets", s.budgets);
    s.budget_bits = kv.get_uint_list("eval.budget_bits", s.budget_bits);
    s.snrs = kv.get_double_list("eval.snrs", s.snrs);
    s.data_dir = kv.get_string("data.dir", s.data_dir);
    if (s.budgets.size() != s.budget_bits.size())
      throw ConfigError("eval.budgets and eval.budget_bits differ in length");
    return s;
  }
};

inline std::uint32_t config_hash(const KeyValues& kv) {
  const auto text = kv.to_text();
  return io::crc32({reinterpret_cast<const std::uint8_t*>(text.data()), text.size()});
}

inline std::string hex32(std::uint32_t v) {
  char buf[9];
  std::snprintf(buf, sizeof(buf), "%08x", v);
  return buf;
}

inline void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  out << text;
  if (!out) throw ValidationError("cannot write " + path.string());
}

// Model settings from the config with the sequence geometry of each task.
inline model::ModelConfig feedback_model_config(const KeyValues& kv, const channel::SystemGeometry& g) {
  auto mc = model::ModelConfig::from_key_values(kv);
  mc.n_tokens = g.n_subband;
  mc.token_dim = 2 * g.n_tx;
  mc.pilot_tokens = 0;
  mc.validate();
  return mc;
}

inline model::ModelConfig estimation_model_config(const KeyValues& kv, const channel::SystemGeometry& g) {
  auto mc = model::ModelConfig::from_key_values(kv);
  mc.n_tokens = g.n_sub;
  mc.token_dim = 2 * g.n_rx * g.n_tx;
  mc.keep = std::min(mc.keep, mc.n_tokens);
  mc.quant = model::QuantScheme::none;
  return mc;
}

// Uniform quantizer with B bits per value and d_q = budget / (m B).
inline model::ModelConfig with_budget(model::ModelConfig mc, std::uint64_t budget, std::uint64_t bits) {
  if (bits == 0 || budget % (mc.keep * bits) != 0)
    throw ConfigError("budget " + std::to_string(budget) + " is not a multiple of keep * bits");
  mc.quant = model::QuantScheme::uniform;
  mc.uniform.bits = static_cast<unsigned>(bits);
  mc.d_q = budget / (mc.keep * bits);
  mc.validate();
  if (mc.payload_bits() != budget) throw ConfigError("budget mapping does not reproduce the payload size");
  return mc;
}

// Best truncation baseline over the feasible keep counts.
inline double truncation_rho(const std::vector<EigenMatrix>& test, std::size_t budget) {
  if (test.empty()) throw ValidationError("truncation: empty test set");
  const auto& w0 = test.front();
  const auto options = truncation_keep_options(w0.n_subband, w0.n_tx, budget);
  if (options.empty()) throw ConfigError("budget too small for the truncation baseline");
  double best = 0.0;
  for (auto keep : options) {
    std::vector<EigenMatrix> rec;
    rec.reserve(test.size());
    for (const auto& w : test) rec.push_back(baseline_truncation(w, keep, budget));
    best = std::max(best, rho(test, rec));
  }
  return best;
}

struct EvalRow {
  std::string task;
  std::string regime;
  std::size_t budget = 0;  // 0 when no payload is involved
  std::optional<double> snr_db, nmse_db, ls_nmse_db, rho, rho_truncation;
  std::size_t n_test = 0;
  std::uint64_t seed = 0;
  std::uint32_t hash = 0;
};

inline std::string results_csv(const std::vector<EvalRow>& rows) {
  auto cell = [](const std::optional<double>& v) { return v ? KeyValues::format_double(*v) : ""; };
  std::string out = "task,regime,budget_bits,snr_db,nmse_db,ls_nmse_db,rho,rho_truncation,n_test,seed,config_hash\n";
  for (const auto& r : rows)
    out += r.task + "," + r.regime + "," + (r.budget ? std::to_string(r.budget) : "") + "," +
           cell(r.snr_db) + "," + cell(r.nmse_db) + "," + cell(r.ls_nmse_db) + "," + cell(r.rho) + "," +
           cell(r.rho_truncation) + "," + std::to_string(r.n_test) + "," + std::to_string(r.seed) + "," +
           hex32(r.hash) + "\n";
  return out;
}

inline std::string budget_rho_csv(const std::vector<EvalRow>& rows) {
  std::string out = "budget_bits,rho,rho_truncation\n";
  for (const auto& r : rows)
    if (r.budget && r.rho)
      out += std::to_string(r.budget) + "," + KeyValues::format_double(*r.rho) + "," +
             (r.rho_truncation ? KeyValues::format_double(*r.rho_truncation) : "") + "\n";
  return out;
}

inline std::string snr_nmse_csv(const std::vector<EvalRow>& rows) {
  std::string out = "snr_db,nmse_db,ls_nmse_db\n";
  for (const auto& r : rows)
    if (r.snr_db && r.nmse_db)
      out += KeyValues::format_double(*r.snr_db) + "," + KeyValues::format_double(*r.nmse_db) + "," +
             KeyValues::format_double(*r.ls_nmse_db) + "\n";
  return out;
}

struct EvalContext {
  std::string regime;
  std::uint64_t seed = 0;
  std::uint32_t hash = 0;
};

inline EvalRow feedback_row(const model::FeedbackModel& fb, const std::vector<EigenMatrix>& test,
                            const EvalContext& ctx) {
  std::vector<EigenMatrix> rec;
  rec.reserve(test.size());
  for (const auto& w : test) rec.push_back(model::feedback_pipeline(w, fb).reconstructed);
  EvalRow r{"feedback", "", 0, {}, {}, {}, {}, {}, test.size(), ctx.seed, ctx.hash};
  r.rho = rho(test, rec);
  if (fb.config().quant != model::QuantScheme::none) {
    r.budget = fb.config().payload_bits();
    r.rho_truncation = truncation_rho(test, r.budget);
  }
  return r;
}

inline std::vector<EvalRow> estimation_rows(const model::EstimationModel& est, const train::Dataset& test,
                                            const std::vector<double>& snrs, const EvalContext& ctx) {
  std::vector<EvalRow> rows;
  for (double snr : snrs) {
    const auto sc = train::score_estimation(est, test, snr, ctx.seed);
    EvalRow r{"estimate", ctx.regime, 0, snr, sc.model_nmse_db, sc.ls_nmse_db, {}, {}, test.size(), ctx.seed, ctx.hash};
    rows.push_back(r);
  }
  return rows;
}

inline EvalRow joint_row(const model::EstimationModel& est, const model::FeedbackModel& fb,
                         const train::Dataset& test, double snr, const EvalContext& ctx) {
  EvalRow r{"joint", ctx.regime, 0, snr, {}, {}, {}, {}, test.size(), ctx.seed, ctx.hash};
  r.rho = rho(test.eigens, train::composed_feedback(est, fb, test, snr, ctx.seed));
  if (fb.config().quant != model::QuantScheme::none) r.budget = fb.config().payload_bits();
  return r;
}

// Runs `fn`, prefixing any library error with the stage name while keeping
// its type (the CLI maps types to exit codes).
template <class Fn>
auto run_stage(const std::string& stage, Fn&& fn) -> decltype(fn()) {
  try {
    return fn();
  } catch (const ConfigError& e) {
    throw ConfigError(stage + ": " + e.what());
  } catch (const FormatError& e) {
    throw FormatError(stage + ": " + e.what());
  } catch (const DivergenceError& e) {
    throw DivergenceError(stage + ": " + e.what());
  } catch (const DimensionError& e) {
    throw DimensionError(stage + ": " + e.what());
  } catch (const ValidationError& e) {
    throw ValidationError(stage + ": " + e.what());
  }
}

// Generated or loaded data plus the split point (first n_train samples train).
struct SplitData {
  train::Dataset all, train_set, test_set;
};

inline SplitData split_dataset(train::Dataset all, double test_fraction) {
  train::DataConfig dc;
  dc.n_samples = all.size();
  dc.test_fraction = test_fraction;
  if (all.size() < 2) throw FormatError("dataset needs at least two samples");
  const auto n = dc.n_train();
  SplitData s{std::move(all), {}, {}};
  s.train_set = s.all.slice(0, n);
  s.test_set = s.all.slice(n, s.all.size());
  return s;
}

// Geometry and channel keys that the models see.
inline train::DataConfig data_config(const KeyValues& kv) { return train::DataConfig::from_key_values(kv); }

class Timing {
 public:
  void record(const std::string& stage, double seconds) {
    text_ += stage + " = " + KeyValues::format_double(seconds) + "\n";
  }
  const std::string& text() const { return text_; }

 private:
  std::string text_;
};

template <class Fn>
auto timed(Timing& timing, const std::string& stage, Fn&& fn) -> decltype(fn()) {
  const auto t0 = std::chrono::steady_clock::now();
  if constexpr (std::is_void_v<decltype(fn())>) {
    run_stage(stage, fn);
    timing.record(stage, std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
  } else {
    auto out = run_stage(stage, fn);
    timing.record(stage, std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
    return out;
  }
}

inline train::Dataset obtain_dataset(const train::DataConfig& dc, const std::string& data_dir,
                                     const std::filesystem::path& out_dir) {
  if (!data_dir.empty()) return train::load_dataset(data_dir, dc);
  auto d = train::generate_dataset(dc);
  const auto dir = out_dir / "data";
  std::filesystem::create_directories(dir);
  train::save_dataset(dir.string(), d);
  return d;
}

struct ExperimentResult {
  std::vector<EvalRow> rows;
  std::uint32_t hash = 0;
};

inline ExperimentResult run_experiment(const KeyValues& kv, const std::filesystem::path& out_dir) {
  const auto settings = run_stage("config", [&] { return ExperimentSettings::from_key_values(kv); });
  const auto dc = run_stage("config", [&] { return data_config(kv); });
  const auto tc = run_stage("config", [&] { return train::TrainConfig::from_key_values(kv); });
  if (settings.task != Task::feedback) run_stage("config", [&] { check_regime(settings.task, tc.regime); });
  std::filesystem::create_directories(out_dir);

  ExperimentResult result;
  result.hash = config_hash(kv);
  write_text(out_dir / "manifest.txt", kv.to_text() + "# config_hash = " + hex32(result.hash) + "\n");
  const EvalContext ctx{settings.task == Task::feedback ? "" : train::to_string(tc.regime), tc.seed, result.hash};

  Timing timing;
  auto finish = [&] {
    write_text(out_dir / "results.csv", results_csv(result.rows));
    write_text(out_dir / "plot_budget_rho.csv", budget_rho_csv(result.rows));
    write_text(out_dir / "plot_snr_nmse.csv", snr_nmse_csv(result.rows));
    write_text(out_dir / "timing.txt", timing.text());
  };

  const auto data = timed(timing, "gen-data", [&] {
    return split_dataset(obtain_dataset(dc, settings.data_dir, out_dir), dc.test_fraction);
  });
  const auto& geom = data.all.geom;

  auto save_run = [&](const std::string& name, const train::TrainReport& rep) {
    write_text(out_dir / ("curve_" + name + ".csv"), rep.curve_csv());
  };

  if (settings.task == Task::feedback || settings.task == Task::joint) {
    for (std::size_t b = 0; b < settings.budgets.size(); ++b) {
      const auto budget = settings.budgets[b];
      const std::string name = "b" + std::to_string(budget);
      const auto fb_cfg = run_stage("config", [&] {
        return with_budget(feedback_model_config(kv, geom), budget, settings.budget_bits[b]);
      });
      model::FeedbackModel fb(fb_cfg);
      if (settings.task == Task::feedback) {
        const auto rep = timed(timing, "train " + name, [&] {
          return train::train_feedback(fb, data.train_set.eigens, data.test_set.eigens, tc);
        });
        save_run("feedback_" + name, rep);
        model::save_checkpoint((out_dir / ("feedback_" + name + ".fmw")).string(), model::make_checkpoint(fb));
        result.rows.push_back(timed(timing, "eval " + name, [&] { return feedback_row(fb, data.test_set.eigens, ctx); }));
      } else {
        model::EstimationModel est(estimation_model_config(kv, geom), geom.pilot_pattern.pilot_indices);
        const auto rep = timed(timing, "train " + name, [&] {
          return tc.regime == train::Regime::end_to_end
                     ? train::train_end_to_end(est, fb, data.train_set, data.test_set, tc)
                     : train::train_splited(est, fb, data.train_set, data.test_set, tc);
        });
        save_run("joint_" + name, rep);
        model::save_checkpoint((out_dir / ("feedback_" + name + ".fmw")).string(), model::make_checkpoint(fb));
        model::save_checkpoint((out_dir / ("estimation_" + name + ".fmw")).string(), model::make_checkpoint(est));
        result.rows.push_back(timed(timing, "eval " + name, [&] {
          auto r = joint_row(est, fb, data.test_set, tc.eval_snr, ctx);
          r.rho_truncation = truncation_rho(data.test_set.eigens, budget);
          return r;
        }));
      }
      finish();  // partial results survive a later failure
    }
  } else {
    model::EstimationModel est(run_stage("config", [&] { return estimation_model_config(kv, geom); }),
                               geom.pilot_pattern.pilot_indices);
    const auto rep = timed(timing, "train", [&] {
      return train::train_estimation(est, data.train_set, data.test_set, tc);
    });
    save_run("estimation", rep);
    model::save_checkpoint((out_dir / "estimation.fmw").string(), model::make_checkpoint(est));
    const auto rows = timed(timing, "eval", [&] { return estimation_rows(est, data.test_set, settings.snrs, ctx); });
    result.rows.insert(result.rows.end(), rows.begin(), rows.end());
  }
  finish();
  return result;
}

}  // namespace flowmat::eval

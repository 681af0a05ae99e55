// flowmat command-line driver: gen-data, train, eval, analyze-corr, report.
//
// Exit codes: 0 ok, 2 config error, 3 data error, 4 training divergence.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "flowmat/eval/experiment.hpp"

namespace fs = std::filesystem;
using namespace flowmat;

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitData = 3;
constexpr int kExitDivergence = 4;

KeyValues load_config(const std::string& path) {
  KeyValues kv;
  if (!path.empty()) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    kv = KeyValues::parse(ss.str());
  }
  if (const char* env = std::getenv("FMAT_SEED")) {
    KeyValues probe;
    probe.set("seed", env);
    probe.get_uint("seed", 0);  // rejects non-numeric overrides
    kv.set("seed", env);
  }
  return kv;
}

void warn_unused(const KeyValues& kv) {
  for (const auto& k : kv.unused_keys()) std::cerr << "warning: config key '" << k << "' is not used\n";
}

eval::SplitData data_for(const KeyValues& kv, const std::string& data_dir) {
  const auto dc = eval::data_config(kv);
  auto all = data_dir.empty() ? train::generate_dataset(dc) : train::load_dataset(data_dir, dc);
  return eval::split_dataset(std::move(all), dc.test_fraction);
}

void finish_rows(const fs::path& out, const std::vector<eval::EvalRow>& rows) {
  eval::write_text(out / "results.csv", eval::results_csv(rows));
  eval::write_text(out / "plot_budget_rho.csv", eval::budget_rho_csv(rows));
  eval::write_text(out / "plot_snr_nmse.csv", eval::snr_nmse_csv(rows));
  std::cout << eval::results_csv(rows);
}

int cmd_gen_data(const KeyValues& kv, const fs::path& out) {
  const auto dc = eval::data_config(kv);
  fs::create_directories(out);
  const auto d = train::generate_dataset(dc);
  train::save_dataset(out.string(), d);
  KeyValues manifest;
  dc.to_key_values(manifest);
  eval::write_text(out / "data.txt", manifest.to_text());
  std::cout << "wrote " << d.size() << " samples to " << out.string() << "\n";
  return 0;
}

int cmd_train(KeyValues kv, const std::string& task_name, const std::string& regime_name,
              const std::string& data_dir, std::uint64_t budget, std::uint64_t bits, const fs::path& out) {
  const auto task = eval::parse_task(task_name);
  if (!regime_name.empty()) kv.set("train.regime", regime_name);
  const auto tc = train::TrainConfig::from_key_values(kv);
  if (task != eval::Task::feedback) eval::check_regime(task, tc.regime);
  const auto data = data_for(kv, data_dir);
  const auto& geom = data.all.geom;
  fs::create_directories(out);

  auto fb_cfg = eval::feedback_model_config(kv, geom);
  if (budget) fb_cfg = eval::with_budget(fb_cfg, budget, bits);
  const auto t0 = std::chrono::steady_clock::now();
  train::TrainReport rep;
  if (task == eval::Task::feedback) {
    model::FeedbackModel fb(fb_cfg);
    rep = train::train_feedback(fb, data.train_set.eigens, data.test_set.eigens, tc);
    model::save_checkpoint((out / "feedback.fmw").string(), model::make_checkpoint(fb));
  } else {
    model::EstimationModel est(eval::estimation_model_config(kv, geom), geom.pilot_pattern.pilot_indices);
    if (task == eval::Task::estimate) {
      rep = train::train_estimation(est, data.train_set, data.test_set, tc);
    } else {
      model::FeedbackModel fb(fb_cfg);
      rep = tc.regime == train::Regime::end_to_end
                ? train::train_end_to_end(est, fb, data.train_set, data.test_set, tc)
                : train::train_splited(est, fb, data.train_set, data.test_set, tc);
      model::save_checkpoint((out / "feedback.fmw").string(), model::make_checkpoint(fb));
    }
    model::save_checkpoint((out / "estimation.fmw").string(), model::make_checkpoint(est));
  }
  rep.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  rep.config = kv;
  eval::write_text(out / "curve.csv", rep.curve_csv());
  eval::write_text(out / "summary.txt", rep.summary());
  eval::write_text(out / "timing.txt", "train = " + KeyValues::format_double(rep.wall_seconds) + "\n");
  for (const auto& [k, v] : rep.metrics) std::cout << k << " = " << KeyValues::format_double(v) << "\n";
  warn_unused(kv);
  return 0;
}

int cmd_eval(const KeyValues& kv, const fs::path& models, const std::string& data_dir, const fs::path& out) {
  const auto settings = eval::ExperimentSettings::from_key_values(kv);
  const auto tc = train::TrainConfig::from_key_values(kv);
  const auto data = data_for(kv, data_dir);
  const eval::EvalContext ctx{"", tc.seed, eval::config_hash(kv)};
  const bool has_fb = fs::exists(models / "feedback.fmw");
  const bool has_est = fs::exists(models / "estimation.fmw");
  if (!has_fb && !has_est) throw FormatError("no feedback.fmw or estimation.fmw in " + models.string());
  std::vector<eval::EvalRow> rows;
  std::optional<model::FeedbackModel> fb;
  std::optional<model::EstimationModel> est;
  if (has_fb) {
    fb.emplace(model::feedback_from_checkpoint(model::load_checkpoint((models / "feedback.fmw").string())));
    rows.push_back(eval::feedback_row(*fb, data.test_set.eigens, ctx));
  }
  if (has_est) {
    est.emplace(model::estimation_from_checkpoint(model::load_checkpoint((models / "estimation.fmw").string())));
    const auto r = eval::estimation_rows(*est, data.test_set, settings.snrs, ctx);
    rows.insert(rows.end(), r.begin(), r.end());
  }
  if (fb && est) rows.push_back(eval::joint_row(*est, *fb, data.test_set, tc.eval_snr, ctx));
  fs::create_directories(out);
  finish_rows(out, rows);
  return 0;
}

int cmd_analyze_corr(KeyValues kv, const std::vector<std::uint64_t>& paths, std::size_t samples,
                     const fs::path& out) {
  fs::create_directories(out);
  std::string summary = "n_paths,mean_off_diagonal,min_entry,max_asymmetry,max_diag_error\n";
  for (auto l : paths) {
    kv.set_uint("chan.n_paths", l);
    kv.set_uint("data.n_samples", std::max<std::size_t>(samples, 2));
    const auto dc = eval::data_config(kv);
    std::vector<std::vector<double>> mean;
    double off = 0.0, min_entry = 1.0, asym = 0.0, diag = 0.0;
    for (std::size_t i = 0; i < samples; ++i) {
      auto profile = dc.profile;
      profile.seed = train::derive_seed(dc.seed, train::kStreamChannel, i);
      const auto c = eval::freq_correlation(channel::generate_channel(dc.geom, profile));
      if (mean.empty()) mean.assign(c.size(), std::vector<double>(c.size(), 0.0));
      off += eval::mean_off_diagonal(c);
      for (std::size_t a = 0; a < c.size(); ++a) {
        diag = std::max(diag, std::abs(c[a][a] - 1.0));
        for (std::size_t b = 0; b < c.size(); ++b) {
          mean[a][b] += c[a][b] / static_cast<double>(samples);
          min_entry = std::min(min_entry, c[a][b]);
          asym = std::max(asym, std::abs(c[a][b] - c[b][a]));
        }
      }
    }
    summary += std::to_string(l) + "," + KeyValues::format_double(off / static_cast<double>(samples)) + "," +
               KeyValues::format_double(min_entry) + "," + KeyValues::format_double(asym) + "," +
               KeyValues::format_double(diag) + "\n";
    std::string matrix;
    for (const auto& row : mean) {
      for (std::size_t b = 0; b < row.size(); ++b) matrix += (b ? "," : "") + KeyValues::format_double(row[b]);
      matrix += "\n";
    }
    eval::write_text(out / ("corr_matrix_L" + std::to_string(l) + ".csv"), matrix);
  }
  eval::write_text(out / "corr_summary.csv", summary);
  std::cout << summary;
  return 0;
}

int cmd_report(const KeyValues& kv, const fs::path& out) {
  const auto res = eval::run_experiment(kv, out);
  std::cout << eval::results_csv(res.rows);
  warn_unused(kv);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"FlowMat channel estimation and eigenvector feedback"};
  app.require_subcommand(1);
  std::string config, out, data, models, task = "feedback", regime;
  std::uint64_t budget = 0, bits = 2;
  std::vector<std::uint64_t> paths{1, 2, 3, 4};
  std::size_t samples = 20;

  auto* gen = app.add_subcommand("gen-data", "generate a synthetic dataset");
  auto* trn = app.add_subcommand("train", "train a model");
  auto* evl = app.add_subcommand("eval", "evaluate trained checkpoints");
  auto* cor = app.add_subcommand("analyze-corr", "frequency correlation of synthetic channels");
  auto* rep = app.add_subcommand("report", "run gen, train and eval from one config");
  for (auto* sc : {gen, trn, evl, cor, rep}) {
    sc->add_option("--config", config, "key = value config file");
    sc->add_option("--out", out, "output directory")->required();
  }
  trn->add_option("--task", task, "estimate | feedback | joint");
  trn->add_option("--regime", regime, "progressive | joint | end_to_end | splited");
  trn->add_option("--budget", budget, "feedback bit budget (uniform quantizer)");
  trn->add_option("--bits", bits, "bits per latent value with --budget");
  for (auto* sc : {trn, evl}) sc->add_option("--data", data, "dataset directory from gen-data");
  evl->add_option("--models", models, "directory holding feedback.fmw / estimation.fmw")->required();
  cor->add_option("--paths", paths, "path counts to analyse")->delimiter(',');
  cor->add_option("--samples", samples, "channels per path count");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitConfig;
  }

  try {
    const auto kv = load_config(config);
    if (gen->parsed()) return cmd_gen_data(kv, out);
    if (trn->parsed()) return cmd_train(kv, task, regime, data, budget, bits, out);
    if (evl->parsed()) return cmd_eval(kv, models, data, out);
    if (cor->parsed()) return cmd_analyze_corr(kv, paths, samples, out);
    if (rep->parsed()) return cmd_report(kv, out);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const DivergenceError& e) {
    std::cerr << "training diverged: " << e.what() << "\n";
    return kExitDivergence;
  } catch (const Error& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kExitData;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kExitData;
  }
  return 0;
}

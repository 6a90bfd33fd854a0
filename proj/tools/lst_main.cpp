// lst: synthetic scenes, training, evaluation and gradient self-check for the
// supertoken point-cloud segmentation network.

#include <cstdint>
#include <exception>
#include <fstream>
#include <iostream>
#include <limits>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "lst/checkpoint.hpp"
#include "lst/config.hpp"
#include "lst/errors.hpp"
#include "lst/metrics.hpp"
#include "lst/pipeline.hpp"
#include "lst/selfcheck.hpp"
#include "lst/synthdata.hpp"

namespace {

enum ExitCode : int { kOk = 0, kConfig = 2, kData = 3, kNumeric = 4 };

struct Flags {
  std::string config;
  std::string checkpoint;
  std::string out;
  std::optional<std::uint64_t> seed;
  std::string inject_fault;
  std::optional<std::size_t> stop_after;
};

lst::RunConfig load(const Flags& f) {
  if (f.config.empty()) throw lst::ConfigError("--config is required");
  lst::RunConfig c = lst::load_config(f.config);
  if (f.seed) c.set_seed(*f.seed);
  return c;
}

std::filesystem::path out_dir(const Flags& f, const std::filesystem::path& fallback) {
  return f.out.empty() ? fallback : std::filesystem::path(f.out);
}

int cmd_synth(const Flags& f) {
  const lst::RunConfig c = load(f);
  const auto dir = out_dir(f, c.data_dir);
  const auto scenes = lst::pipeline::synthesize(c);
  lst::pipeline::write_scenes(dir, scenes);
  std::array<std::size_t, lst::synth::kClassCount> counts{};
  std::size_t total = 0;
  for (const auto& s : scenes)
    for (int l : s.labels) ++counts[static_cast<std::size_t>(l)], ++total;
  std::cout << "wrote " << scenes.size() << " scenes (" << total << " points) to " << dir.string() << '\n';
  for (std::size_t k = 0; k < counts.size(); ++k) {
    std::cout << "  " << lst::synth::kClassNames[k] << ": " << counts[k] << '\n';
  }
  return kOk;
}

int cmd_train(const Flags& f) {
  const lst::RunConfig c = load(f);
  const auto dir = out_dir(f, c.out_dir);
  const auto data = lst::pipeline::build_dataset(lst::pipeline::load_scenes(c), c);
  std::filesystem::create_directories(dir);

  lst::train::TrainState state = lst::train::initial_state(c.model, c.seed);
  const auto history_path = dir / "history.csv";
  std::ofstream history;
  if (!f.checkpoint.empty()) {
    state = lst::train::load_state(lst::read_checkpoint(f.checkpoint), c.model);
    std::cout << "resuming at epoch " << state.next_epoch << '\n';
    const bool existing = std::filesystem::exists(history_path);
    history.open(history_path, std::ios::app);
    if (!existing) lst::train::write_history_header(history);
  } else {
    history.open(history_path);
    lst::train::write_history_header(history);
  }
  if (!history) throw lst::DataError("cannot write " + history_path.string());

  {
    std::ofstream cfg(dir / "config.txt");
    lst::write_config(cfg, c);
  }
  const auto ckpt_path = dir / "checkpoint.bin";
  auto outcome = lst::pipeline::run_training(
      data, c, std::move(state), &history, [&](const lst::train::EpochRecord& rec, const lst::train::TrainState& s) {
        lst::write_checkpoint(ckpt_path, lst::train::save_state(s, c.model));
        std::cout << "epoch " << rec.epoch << "  lr " << rec.lr << "  loss " << rec.train_loss;
        if (rec.eval) std::cout << "  OA " << rec.eval->overall_accuracy << "  mIoU " << rec.eval->mean_iou;
        std::cout << '\n';
      },
      f.stop_after.value_or(std::numeric_limits<std::size_t>::max()));
  lst::write_checkpoint(ckpt_path, lst::train::save_state(outcome.state, c.model));
  std::cout << "best held-out mIoU " << outcome.state.best_miou << "; checkpoint " << ckpt_path.string() << '\n';
  return kOk;
}

int cmd_eval(const Flags& f) {
  const lst::RunConfig c = load(f);
  const auto dir = out_dir(f, c.out_dir);
  const auto ckpt_path = f.checkpoint.empty() ? c.out_dir / "checkpoint.bin" : std::filesystem::path(f.checkpoint);
  const lst::train::TrainState state = lst::train::load_state(lst::read_checkpoint(ckpt_path), c.model);
  const auto data = lst::pipeline::build_dataset(lst::pipeline::load_scenes(c), c);
  std::filesystem::create_directories(dir);

  std::vector<std::string> names(lst::synth::kClassNames.begin(), lst::synth::kClassNames.end());
  lst::metrics::ConfusionMatrix total(c.model.classes);
  std::ofstream csv(dir / "predictions.csv");
  csv << "scene,x,y,z,label,pred,cluster\n";
  csv.precision(17);
  const std::size_t first = c.scene_count - c.holdout;
  for (std::size_t s = 0; s < data.eval_scenes.size(); ++s) {
    const auto& blocks = data.eval_scenes[s];
    auto result = lst::train::evaluate(blocks, state.best_params, c.model, c.train.assign_mode, true);
    total += result.confusion;
    const auto vertices = lst::pipeline::scene_vertices(blocks, result.predictions);
    char name[32];
    std::snprintf(name, sizeof name, "scene_%03zu.ply", first + s);
    lst::write_ply(dir / name, vertices);
    for (const auto& v : vertices) {
      csv << first + s << ',' << v.position[0] << ',' << v.position[1] << ',' << v.position[2] << ',' << v.label
          << ',' << v.pred << ',' << v.cluster << '\n';
    }
  }
  const auto m = lst::metrics::derive_metrics(total);
  const std::string report = lst::metrics::format_report(total, m, names);
  std::cout << report;
  std::ofstream(dir / "report.txt") << report;
  std::ofstream metrics_csv(dir / "metrics.csv");
  lst::metrics::write_metrics_csv(metrics_csv, m, names);
  return kOk;
}

int cmd_selfcheck(const Flags& f) {
  lst::selfcheck::Options opt;
  if (f.seed) opt.seed = *f.seed;
  opt.inject_fault = f.inject_fault;
  const auto results = lst::selfcheck::run(opt);
  lst::selfcheck::print_report(std::cout, results);
  if (lst::selfcheck::all_passed(results)) return kOk;
  std::cerr << "selfcheck failed:";
  for (const auto& r : results)
    if (!r.passed) std::cerr << ' ' << r.name;
  std::cerr << '\n';
  return kNumeric;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Supertoken point-cloud segmentation"};
  app.require_subcommand(1);
  Flags flags;
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", flags.config, "run configuration file");
    sub->add_option("--seed", flags.seed, "overrides the configured seed");
    sub->add_option("--out", flags.out, "output directory");
  };
  auto* synth = app.add_subcommand("synth", "generate synthetic labelled scenes");
  add_common(synth);
  auto* train = app.add_subcommand("train", "preprocess scenes and train");
  add_common(train);
  train->add_option("--checkpoint", flags.checkpoint, "resume from this checkpoint");
  train->add_option("--stop-after", flags.stop_after, "run at most this many epochs, then save and exit")
      ->check(CLI::PositiveNumber);
  auto* eval = app.add_subcommand("eval", "evaluate held-out scenes");
  add_common(eval);
  eval->add_option("--checkpoint", flags.checkpoint, "checkpoint to evaluate");
  auto* check = app.add_subcommand("selfcheck", "gradient and oracle checks");
  check->add_option("--seed", flags.seed, "instance seed");
  check->add_option("--inject-fault", flags.inject_fault, "flip the analytic gradient of one check")
      ->check(CLI::IsMember(lst::selfcheck::check_names()));

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kConfig;
  }

  try {
    if (*synth) return cmd_synth(flags);
    if (*train) return cmd_train(flags);
    if (*eval) return cmd_eval(flags);
    return cmd_selfcheck(flags);
  } catch (const lst::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kConfig;
  } catch (const lst::DataError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return kData;
  } catch (const lst::NumericError& e) {
    std::cerr << "numeric failure: " << e.what() << '\n';
    return kNumeric;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kData;
  }
}

// rcl: cached-pseudo-label curriculum distillation from the command line.
//
//   rcl simulate  --config sim.json --out DIR
//   rcl label     --records teachers.jsonl --vocab vocab.txt --out pl.csv [--backend ngram|precomputed:<path>] [--on-unlabeled drop|error]
//   rcl partition --pseudo-labels pl.csv --out partition.csv
//   rcl report    --pseudo-labels pl.csv --features features.csv [--out report.json]
//   rcl train     --config run.json [--out DIR] [--seed N]
//   rcl eval      --checkpoint model.ckpt --features features.csv [--labels labels.txt] [--out acc.json]

#include <cstdint>
#include <filesystem>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "rcl/pipeline.hpp"

namespace {

void require_file(const std::string& path, const std::string& what) {
  if (!std::filesystem::exists(path)) rcl::fail(rcl::ErrorKind::Config, what + " not found: " + path);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Reliability-gated multi-teacher curriculum distillation"};
  app.require_subcommand(1);

  std::uint64_t seed = 0;
  std::string config, out, records, vocab, backend = "ngram", on_unlabeled = "drop", pl_csv, features, checkpoint, labels;

  auto* sim = app.add_subcommand("simulate", "Generate blob features, simulated teachers and teacher text");
  sim->add_option("--config", config, "Simulation config JSON")->required();
  sim->add_option("--out", out, "Output directory")->required();
  sim->add_option("--seed", seed, "Override the config seed");

  auto* label = app.add_subcommand("label", "Map teacher text to class pseudo-labels");
  label->add_option("--records", records, "Teacher records (JSON Lines)")->required();
  label->add_option("--vocab", vocab, "Class vocabulary, one name per line")->required();
  label->add_option("--out", out, "Pseudo-label CSV to write")->required();
  label->add_option("--backend", backend, "ngram or precomputed:<path>");
  label->add_option("--on-unlabeled", on_unlabeled, "drop or error")->check(CLI::IsMember({"drop", "error"}));
  label->add_option("--seed", seed, "Unused; accepted for uniformity");

  auto* part = app.add_subcommand("partition", "Score teacher agreement and tag samples R / LR / UR");
  part->add_option("--pseudo-labels", pl_csv, "Pseudo-label CSV")->required();
  part->add_option("--out", out, "Partition CSV to write")->required();

  auto* report = app.add_subcommand("report", "Pseudo-label accuracy per reliability bin");
  report->add_option("--pseudo-labels", pl_csv, "Pseudo-label CSV")->required();
  report->add_option("--features", features, "Features CSV with a label column")->required();
  report->add_option("--out", out, "Report JSON to write");
  report->add_option("--seed", seed, "Tie-break seed for majority votes");

  auto* train = app.add_subcommand("train", "Run the RKT -> SMKE -> MMR curriculum");
  train->add_option("--config", config, "Run config JSON")->required();
  train->add_option("--out", out, "Override paths.output_dir");
  auto* seed_opt = train->add_option("--seed", seed, "Override the config seed");

  auto* eval = app.add_subcommand("eval", "Accuracy of a checkpoint");
  eval->add_option("--checkpoint", checkpoint, "Model checkpoint")->required();
  eval->add_option("--features", features, "Features file (CSV or binary)")->required();
  eval->add_option("--labels", labels, "Labels file, one class index per line");
  eval->add_option("--out", out, "Accuracy JSON to write (default: stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    if (*sim) {
      require_file(config, "simulation config");
      auto spec = rcl::parse_simulation_spec(rcl::detail::read_json_file(config));
      if (sim->count("--seed")) spec.blobs.seed = seed;
      const auto result = rcl::simulate(spec);
      rcl::write_simulation(result, spec.vocab, out);
      std::cout << "wrote " << result.dataset.size() << " samples, " << result.records.size() << " teacher records to " << out << '\n';
    } else if (*label) {
      require_file(records, "teacher records");
      require_file(vocab, "vocab");
      const auto policy = on_unlabeled == "error" ? rcl::UnlabeledPolicy::Error : rcl::UnlabeledPolicy::Drop;
      rcl::label_command(records, vocab, backend, policy, out, std::cout);
    } else if (*part) {
      require_file(pl_csv, "pseudo-label CSV");
      rcl::partition_command(pl_csv, out, std::cout);
    } else if (*report) {
      require_file(pl_csv, "pseudo-label CSV");
      require_file(features, "features");
      const auto complete = rcl::filter_complete_rows(rcl::load_pseudo_labels(pl_csv));
      const auto ds = rcl::load_features(features);
      if (!ds.true_labels) rcl::fail(rcl::ErrorKind::Config, "report needs a features CSV with a label column");
      std::unordered_map<std::string, int> truth_of;
      for (std::size_t i = 0; i < ds.size(); ++i) truth_of.emplace(ds.sample_ids[i], (*ds.true_labels)[i]);
      std::vector<int> truths;
      for (const auto& id : complete.matrix.sample_ids()) {
        auto it = truth_of.find(id);
        if (it == truth_of.end()) rcl::fail(rcl::ErrorKind::Parse, "no label for sample '" + id + "'");
        truths.push_back(it->second);
      }
      const auto partition = rcl::partition(complete.matrix);
      const auto rr = rcl::reliability_report(complete.matrix, partition, truths, seed);
      rcl::print_reliability_table(std::cout, rr);
      std::cout << "ensemble accuracy " << rcl::ensemble_baseline(complete.matrix, truths, seed) << '\n';
      if (!out.empty()) rcl::detail::write_atomic(out, rcl::reliability_report_json(rr).dump(2) + "\n");
    } else if (*train) {
      require_file(config, "run config");
      auto cfg = rcl::load_run_config(config);
      if (!out.empty()) cfg.output_dir = out;
      if (seed_opt->count()) cfg.seed = seed;
      rcl::train_command(cfg, std::cout);
    } else if (*eval) {
      require_file(checkpoint, "checkpoint");
      require_file(features, "features");
      const auto j = rcl::eval_command(checkpoint, features, labels);
      if (out.empty())
        std::cout << j.dump(2) << '\n';
      else
        rcl::detail::write_atomic(out, j.dump(2) + "\n");
    }
  } catch (const rcl::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return rcl::exit_code_for(e.kind());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 3;
  }
  return 0;
}

// The shipped three-teacher blob benchmark, built in-process from
// configs/sim.json and configs/run.json.
#pragma once

#include <string>
#include <vector>

#include "rcl/rcl.hpp"

namespace fixture {

struct Benchmark {
  rcl::SimulationSpec spec;
  rcl::RunConfig run;
  rcl::FeatureDataset dataset;
  rcl::PseudoLabelMatrix labels;
  rcl::ReliabilityPartition partition;

  double accuracy_of(const rcl::Student& m) const {
    return rcl::accuracy(rcl::predict(m, rcl::Matrix<float>(dataset.features)), *dataset.true_labels);
  }

  std::vector<std::size_t> student_dims() const {
    std::vector<std::size_t> dims{dataset.dim()};
    dims.insert(dims.end(), run.hidden.begin(), run.hidden.end());
    dims.push_back(spec.blobs.classes);
    return dims;
  }

  rcl::TrainingData training_data() const { return {dataset.unlabeled(), &labels, &partition}; }
};

inline Benchmark load_benchmark() {
  Benchmark b;
  b.spec = rcl::parse_simulation_spec(rcl::detail::read_json_file(std::string(RCL_CONFIGS) + "/sim.json"));
  b.run = rcl::parse_run_config(rcl::detail::read_json_file(std::string(RCL_CONFIGS) + "/run.json"));
  b.dataset = rcl::make_blobs(b.spec.blobs);
  b.labels = rcl::simulate_teachers(b.dataset, b.spec.blobs.classes, b.spec.teachers);
  b.partition = rcl::partition(b.labels);
  return b;
}

/// Accuracy after each stage prefix of the shipped curriculum.
struct StageAccuracies {
  double ensemble = 0.0;
  std::vector<double> after;  // RKT, +SMKE, +MMR
};

inline StageAccuracies run_benchmark(const Benchmark& b) {
  StageAccuracies out;
  out.ensemble = rcl::ensemble_baseline(b.labels, *b.dataset.true_labels, b.run.seed, b.run.ties);
  rcl::Student model(b.student_dims(), b.run.seed);
  rcl::CurriculumOptions<float> opts;
  opts.seed = b.run.seed;
  opts.augment = b.run.augment;
  opts.ties = b.run.ties;
  opts.evaluate = [&b](const rcl::Student& m) -> std::optional<double> { return b.accuracy_of(m); };
  const auto data = b.training_data();
  for (const auto& r : rcl::run_curriculum(model, data, b.run.stages, opts)) out.after.push_back(*r.accuracy);
  return out;
}

}  // namespace fixture

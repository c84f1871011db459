#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "difc/assembly.hpp"
#include "difc/controller.hpp"
#include "difc/machine.hpp"
#include "difc/optim.hpp"
#include "difc/program_matrix.hpp"

namespace difc {

/// The shared synthetic vocabulary (~50 symbols): digit words "0".."23",
/// then arithmetic and recurrence template glue. Token ids are indices
/// into this list; digit tokens have id == value.
const std::vector<std::string>& task_vocabulary();
std::size_t token_id(const std::string& word);  // throws on unknown words

enum class TaskKind { mod_arith, fib_depth, permutation_routing };

struct TaskExample {
  std::vector<std::size_t> tokens;
  std::size_t gold{0};  // expected output value
  // the canonical parse, kept for post-training inspection
  std::size_t a{0}, b{0};
  std::size_t op{0};  // entry index (mod_arith); 0 elsewhere
};

/// A synthetic dataset plus the machine-side contract needed to train on
/// it: the task library source, entry order, which registers the
/// controller fills, where the answer lands and the step budget.
struct Task {
  TaskKind kind{TaskKind::mod_arith};
  std::string name;
  std::size_t n{16};
  std::size_t depth{0};  // fib_depth only
  std::vector<TaskExample> train, test;

  std::vector<std::string> library_sources;  // one assembly text per program
  std::vector<std::string> entry_names;      // selection head order
  std::vector<bool> op_commutative;  // per entry: operand order irrelevant
  std::vector<std::size_t> reg_slots;
  std::size_t out_addr{0};
  std::size_t max_steps{0};
};

/// Deterministic dataset construction with a 90/10 train/test split over
/// distinct examples. mod_arith golds come from the mod-n integer
/// semantics; fib golds from the pairwise-sum recurrence mod n (depth
/// applications, e.g. (6,2) -> 8 -> 10 -> 18); permutation_routing
/// presents (x, y) swapped and labels with 2x + y. Throws on capacity
/// violations (values that exceed the layout) and undersized datasets.
Task make_task(TaskKind kind, std::size_t n, std::size_t size,
               std::uint64_t seed, std::size_t depth = 1);

/// Everything a training run owns: the controller, the linked and
/// compiled task library held as logits frozen by an all-zero mask, and
/// the execution context.
struct TaskModel {
  Controller ctrl;
  Library lib;
  MachineLayout layout;
  Tensor rho_logits;  // compiled library, requires_grad until frozen
  ParameterMask rho_mask;  // all-zero: the library never trains
  ProgramMatrix pm;
  Machine machine;
  std::vector<std::size_t> entry_lines;
};

/// Controller geometry knobs for experiments (vocab, entry count and
/// register slots always come from the task itself).
struct ModelConfig {
  std::size_t embed_dim{16};
  std::size_t hidden_dim{32};
  EncoderKind encoder{EncoderKind::pooling};
};

TaskModel make_task_model(const Task& task, const ModelConfig& config,
                          std::uint64_t seed);

struct EpochMetrics {
  std::size_t epoch{0};
  double train_loss{0}, train_accuracy{0};
  double test_loss{0}, test_accuracy{0};  // accuracies in [0, 100]
};

struct ExperimentResult {
  std::string task;
  std::uint64_t seed{0};
  std::vector<EpochMetrics> epochs;
  std::string status;  // "ok" or "diverged"
  double wall_seconds{0};
  std::string config_json;  // snapshot of every knob that shaped the run

  double final_test_accuracy() const;
  double best_test_accuracy() const;
};

/// Answer-supervised training: per example, run the soft machine from the
/// controller's initialization and take cross-entropy between the
/// expected output cell and the gold Word; update the controller by
/// (optionally momentum) SGD while the library mask freezes the compiled
/// program. Deterministic for a fixed seed. A non-finite loss aborts with
/// status "diverged" instead of throwing.
ExperimentResult train(const Task& task, TaskModel& model,
                       const TrainConfig& config);

/// Fraction of examples whose decoded selection and register Words equal
/// the canonical parse (commutative entries also accept swapped
/// operands). Direct testability of the parsing/selection claim.
double parse_match_rate(const Task& task, const TaskModel& model,
                        const std::vector<TaskExample>& examples);

// ---------------------------------------------------------------------
// Experiment suites

struct StudyConfig {
  std::size_t n{16};
  std::size_t dataset_size{512};
  std::size_t step_budget{32};  // must cover 8*depth + 3 for every depth
  ModelConfig model;
  TrainConfig train;
};

struct DepthStudyRow {
  std::size_t depth{0};
  double mean_accuracy{0}, stdev_accuracy{0};
  std::vector<double> per_seed;  // final test accuracy per seed
};

struct DepthStudyResult {
  std::vector<DepthStudyRow> rows;
  std::vector<ExperimentResult> runs;  // depth-major, then seed
};

/// Trains one fib_depth model per (depth, seed), concurrently across
/// trials, and aggregates final test accuracy per depth. Throws if the
/// step budget cannot cover the deepest recurrence.
DepthStudyResult run_depth_study(const std::vector<std::size_t>& depths,
                                 const std::vector<std::uint64_t>& seeds,
                                 const StudyConfig& config);

struct RoutingConfig {
  std::size_t n{16};
  std::size_t bits{6};       // circuit operand width
  std::size_t max_epochs{12};
  double table_lr{2.0};
  double circuit_lr{2.0};
  std::vector<std::uint64_t> seeds{0, 1, 2};
};

struct BackendRun {
  std::string backend;  // "table" or "circuit"
  std::uint64_t seed{0};
  std::vector<EpochMetrics> epochs;  // train split only; test = in-range held out
  // First 1-based epoch whose end-of-epoch train accuracy is 100%;
  // 0 when it never converged within the budget.
  std::size_t epochs_to_perfect{0};
  // Accuracy on operands beyond the one-hot range, against exact
  // (unwrapped) golds. The table backend cannot encode such operands at
  // all, so it scores 0 and reports non-representability.
  double out_of_range_accuracy{0};
  bool representable_out_of_range{false};
};

struct TablesVsCircuitsResult {
  std::vector<BackendRun> runs;  // table runs first, then circuit runs
  double table_mean_epochs_to_perfect{0};
  double circuit_mean_out_of_range_accuracy{0};
};

/// The routing comparison: a learnable 2x2 slot-routing softmax feeds
/// either a dense lookup-table backend (one-hot operands) or a
/// shift-add/ripple-carry circuit backend (binary operands) computing
/// 2x + y; both train on in-range data presented in swapped order.
TablesVsCircuitsResult run_tables_vs_circuits(const RoutingConfig& config);

// Direct backend evaluation with routing forced to a permutation, used to
// cross-check that both backends agree with the integer oracle on dirac
// in-range operands. Returns the decoded answer.
std::size_t routing_table_answer(std::size_t u, std::size_t v, bool swap,
                                 std::size_t n);
std::size_t routing_circuit_answer(std::size_t u, std::size_t v, bool swap,
                                   std::size_t bits);

// ---------------------------------------------------------------------
// Machine-readable outputs

/// CSV rows "epoch,split,accuracy,loss" (two rows per epoch).
std::string metrics_csv(const std::vector<EpochMetrics>& epochs);
/// CSV "depth,mean_accuracy,stdev_accuracy,seed<i>..." one row per depth.
std::string depth_study_csv(const DepthStudyResult& result);
/// CSV "backend,seed,epoch,accuracy,loss,out_of_range_accuracy".
std::string tables_vs_circuits_csv(const TablesVsCircuitsResult& result);
/// JSON summary of a run: task, seed, status, accuracies, wall time and
/// the config snapshot.
std::string experiment_summary_json(const ExperimentResult& result);

}  // namespace difc

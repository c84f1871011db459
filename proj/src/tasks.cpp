#include "difc/tasks.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <json.hpp>
#include <sstream>
#include <stdexcept>
#include <thread>
#include <unordered_map>

#include "difc/circuits.hpp"
#include "difc/rng.hpp"

namespace difc {

namespace {

constexpr std::size_t kMaxDigit = 23;  // digit tokens "0".."23"

std::vector<std::string> build_vocabulary() {
  std::vector<std::string> v;
  for (std::size_t d = 0; d <= kMaxDigit; ++d) v.push_back(std::to_string(d));
  for (const char* w : {"add", "plus", "compute", "the", "sum", "of", "and",
                        "subtract", "minus", "difference", "from", "distance",
                        "between", "what", "is"})
    v.push_back(w);
  for (const char* w : {"calculate", "fibonacci", "function", "starting",
                        "inputs", "to", "a", "recursion", "depth", "run",
                        "on", "with"})
    v.push_back(w);
  return v;
}

const std::unordered_map<std::string, std::size_t>& vocabulary_index() {
  static const std::unordered_map<std::string, std::size_t> index = [] {
    std::unordered_map<std::string, std::size_t> m;
    const auto& v = task_vocabulary();
    for (std::size_t i = 0; i < v.size(); ++i) m.emplace(v[i], i);
    return m;
  }();
  return index;
}

// Tokenize a space-separated template, substituting A/B/K placeholders
// with digit tokens.
std::vector<std::size_t> expand_template(const std::string& tmpl,
                                         std::size_t a, std::size_t b,
                                         std::size_t k) {
  std::vector<std::size_t> out;
  std::istringstream words(tmpl);
  std::string w;
  while (words >> w) {
    if (w == "A")
      out.push_back(a);
    else if (w == "B")
      out.push_back(b);
    else if (w == "K")
      out.push_back(k);
    else
      out.push_back(token_id(w));
  }
  return out;
}

struct ArithTemplate {
  const char* text;
  std::size_t op;  // entry index: 0 add, 1 sub, 2 distance
};

// Templated phrasings of one-step arithmetic. "subtract B from A"
// computes A - B with the subtrahend spoken first, which is what makes
// parsing (rather than copying) necessary. The operation set is chosen
// so the answers identify the parse. Each op pins a different operand
// combination (a+b, a-b, |a-b|), and their joint consistency pins the
// digits themselves: an idempotent op like max would let "answer in
// both registers" fit perfectly, while a set of purely mod-affine ops
// (add/sub flavors) leaves a parity-product saddle where each register
// head is uniform over one residue class and every within-class
// gradient cancels. |a-b| kills both: dist(x,x)=0 breaks duplication,
// and its non-wrapping boundary breaks the translation symmetry.
constexpr ArithTemplate kArithTemplates[] = {
    {"add A and B", 0},
    {"compute the sum of A and B", 0},
    {"A plus B", 0},
    {"what is A plus B", 0},
    {"subtract B from A", 1},
    {"A minus B", 1},
    {"compute the difference of A and B", 1},
    {"distance between A and B", 2},
    {"the distance from A to B", 2},
    {"what is the distance between A and B", 2},
};

constexpr const char* kFibTemplates[] = {
    "calculate the fibonacci function starting from inputs A and B to a "
    "recursion depth of K",
    "run fibonacci on A and B with depth K",
};

// Entry points apply one operation to registers 2 and 3 and store the
// result at the tape address held in register 5 (0 by default). All
// entries are stage-aligned with dirac destinations: superposed
// execution fetches the counter-weighted mixture of every field, so
// same-length programs whose lines agree on the destination register
// blend into a convex mixture over entries, while misaligned programs
// leak each other's data paths into the shared registers and drown the
// selection gradient. Stages that an entry does not need are add-zero
// no-ops (r6 holds 0) onto the stage's shared destination.
constexpr const char* kModArithSources[3] = {
    "add 2 3 4\nadd 6 7 7\nadd 6 4 4\nwrite 5 4\nhalt\n",
    "sub 2 3 4\nadd 6 7 7\nadd 6 4 4\nwrite 5 4\nhalt\n",
    "max 2 3 4\nmin 2 3 7\nsub 4 7 4\nwrite 5 4\nhalt\n",
};
constexpr const char* kModArithNames[3] = {"madd", "msub", "mdist"};

// Pairwise-sum recurrence: write the running sequence to the tape, then
// leave the depth-k value at the last tape cell. Registers: 2 and 3 hold
// the pair, 5 the depth counter, 4 the tape pointer, 7 the loop flag.
// One iteration is 8 machine steps; the epilogue adds 3.
constexpr const char* kFibDepthSource =
    "loop:\n"
    "    write 4 2\n"
    "    add 2 3 6\n"
    "    copy 3 2\n"
    "    copy 6 3\n"
    "    inc 4 4\n"
    "    dec 5 5\n"
    "    min 5 0 7\n"
    "    jump 7 loop\n"
    "    set 7 4\n"
    "    write 4 3\n"
    "    halt\n";

std::size_t fib_gold(std::size_t a, std::size_t b, std::size_t depth,
                     std::size_t n) {
  std::size_t x = a, y = b;
  for (std::size_t i = 0; i < depth; ++i) {
    std::size_t t = (x + y) % n;
    x = y;
    y = t;
  }
  return y;
}

void split_dataset(std::vector<TaskExample> all, std::size_t size,
                   std::uint64_t seed, Task& task) {
  if (size < 2)
    throw std::invalid_argument("dataset needs at least 2 examples");
  if (size > all.size())
    throw std::invalid_argument(
        "requested " + std::to_string(size) + " examples but only " +
        std::to_string(all.size()) + " distinct ones exist");
  Rng rng(seed);
  rng.shuffle(all);
  const std::size_t test_count = std::max<std::size_t>(1, size / 10);
  const std::size_t train_count = size - test_count;
  task.train.assign(all.begin(), all.begin() + train_count);
  task.test.assign(all.begin() + train_count, all.begin() + size);
}

std::size_t argmax_range(const std::vector<double>& v, std::size_t begin,
                         std::size_t len) {
  std::size_t best = 0;
  double best_v = v[begin];
  for (std::size_t i = 1; i < len; ++i) {
    if (v[begin + i] > best_v) {
      best_v = v[begin + i];
      best = i;
    }
  }
  return best;
}

std::size_t decoded_output(const Tensor& memory, std::size_t addr,
                           std::size_t n) {
  return argmax_range(memory.value(), addr * n, n);
}

// The canonical register assignment the controller should produce.
std::vector<std::size_t> expected_slot_values(const Task& task,
                                              const TaskExample& ex) {
  if (task.kind == TaskKind::fib_depth) return {ex.a, ex.b, task.depth};
  return {ex.a, ex.b};
}

void run_trials(std::size_t count,
                const std::function<void(std::size_t)>& fn) {
  unsigned hw = std::thread::hardware_concurrency();
  std::size_t workers = std::min<std::size_t>(count, hw == 0 ? 1 : hw);
  if (workers <= 1) {
    for (std::size_t i = 0; i < count; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (std::size_t w = 0; w < workers; ++w)
    pool.emplace_back([&] {
      for (std::size_t i; (i = next.fetch_add(1)) < count;) fn(i);
    });
  for (auto& t : pool) t.join();
}

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

}  // namespace

const std::vector<std::string>& task_vocabulary() {
  static const std::vector<std::string> vocab = build_vocabulary();
  return vocab;
}

std::size_t token_id(const std::string& word) {
  const auto& index = vocabulary_index();
  auto it = index.find(word);
  if (it == index.end())
    throw std::invalid_argument("unknown vocabulary word: " + word);
  return it->second;
}

Task make_task(TaskKind kind, std::size_t n, std::size_t size,
               std::uint64_t seed, std::size_t depth) {
  if (n < 2 || n > kMaxDigit + 1)
    throw std::invalid_argument("n must be in [2, " +
                                std::to_string(kMaxDigit + 1) +
                                "] (digit token capacity)");
  Task task;
  task.n = n;
  std::vector<TaskExample> all;

  switch (kind) {
    case TaskKind::mod_arith: {
      task.kind = kind;
      task.name = "mod_arith";
      for (const ArithTemplate& t : kArithTemplates) {
        for (std::size_t a = 0; a < n; ++a) {
          for (std::size_t b = 0; b < n; ++b) {
            TaskExample ex;
            ex.a = a;
            ex.b = b;
            ex.op = t.op;
            ex.tokens = expand_template(t.text, a, b, 0);
            switch (t.op) {
              case 0: ex.gold = (a + b) % n; break;
              case 1: ex.gold = (a + n - b % n) % n; break;
              default: ex.gold = a > b ? a - b : b - a; break;
            }
            all.push_back(std::move(ex));
          }
        }
      }
      task.library_sources.assign(std::begin(kModArithSources),
                                  std::end(kModArithSources));
      task.entry_names.assign(std::begin(kModArithNames),
                              std::end(kModArithNames));
      task.op_commutative = {true, false, true};
      task.reg_slots = {2, 3};
      task.out_addr = 0;
      task.max_steps = 6;
      break;
    }
    case TaskKind::fib_depth: {
      if (depth < 1 || depth > 6)
        throw std::invalid_argument(
            "fib depth must be in [1, 6] (tape capacity)");
      task.kind = kind;
      task.depth = depth;
      task.name = "fib_depth" + std::to_string(depth);
      for (const char* tmpl : kFibTemplates) {
        for (std::size_t a = 0; a < n; ++a) {
          for (std::size_t b = 0; b < n; ++b) {
            TaskExample ex;
            ex.a = a;
            ex.b = b;
            ex.op = 0;
            ex.tokens = expand_template(tmpl, a, b, depth);
            ex.gold = fib_gold(a, b, depth, n);
            all.push_back(std::move(ex));
          }
        }
      }
      task.library_sources = {kFibDepthSource};
      task.entry_names = {"fib_to_depth"};
      // at depth 1 the answer (a + b) is symmetric in the operands
      task.op_commutative = {depth == 1};
      task.reg_slots = {2, 3, 5};
      task.out_addr = 7;
      task.max_steps = 8 * depth + 4;
      break;
    }
    case TaskKind::permutation_routing: {
      task.kind = kind;
      task.name = "permutation_routing";
      const std::size_t x_range = n / 4, y_range = n / 2;
      for (std::size_t x = 0; x < x_range; ++x) {
        for (std::size_t y = 0; y < y_range; ++y) {
          TaskExample ex;
          ex.a = x;
          ex.b = y;
          ex.op = 0;
          ex.gold = 2 * x + y;  // < n by the ranges above
          // fixed unknown permutation: y spoken first
          ex.tokens = {y, x};
          all.push_back(std::move(ex));
        }
      }
      task.op_commutative = {false};
      break;
    }
  }

  split_dataset(std::move(all), size, seed, task);
  return task;
}

TaskModel make_task_model(const Task& task, const ModelConfig& config,
                          std::uint64_t seed) {
  if (task.kind == TaskKind::permutation_routing)
    throw std::invalid_argument(
        "permutation_routing has no task library; use run_tables_vs_circuits");
  TaskModel model;
  model.layout = MachineLayout{task.n, 8, 8};
  std::vector<SymbolicProgram> programs;
  for (std::size_t i = 0; i < task.library_sources.size(); ++i)
    programs.push_back(
        parse(task.library_sources[i], task.entry_names[i], task.n));
  model.lib = link(programs, model.layout.n);

  ProgramMatrix dirac = compile(model.lib, model.layout);
  model.rho_logits = compile_logits(model.lib, model.layout);
  model.rho_mask = freeze_mask(dirac, {protect_all(dirac)});
  model.rho_logits.set_requires_grad(false);
  model.pm.layout = model.layout;
  model.pm.rho = program_matrix_from_logits(model.rho_logits, model.layout);
  model.pm.programs = dirac.programs;
  model.machine = make_machine(model.layout);

  for (const std::string& name : task.entry_names)
    model.entry_lines.push_back(model.lib.entry_points.at(name));

  ControllerConfig cfg;
  cfg.vocab_size = task_vocabulary().size();
  cfg.max_tokens = 16;
  cfg.embed_dim = config.embed_dim;
  cfg.hidden_dim = config.hidden_dim;
  cfg.num_entries = task.entry_names.size();
  cfg.n = task.n;
  cfg.reg_slots = task.reg_slots;
  cfg.digit_tokens = kMaxDigit + 1;
  cfg.encoder = config.encoder;
  cfg.validate(model.layout.registers);
  model.ctrl = make_controller(cfg, seed);
  return model;
}

double ExperimentResult::final_test_accuracy() const {
  return epochs.empty() ? 0.0 : epochs.back().test_accuracy;
}

double ExperimentResult::best_test_accuracy() const {
  double best = 0.0;
  for (const auto& e : epochs) best = std::max(best, e.test_accuracy);
  return best;
}

namespace {

struct EvalStats {
  double loss_sum{0};
  std::size_t correct{0};
  std::size_t count{0};
  bool finite{true};

  double mean_loss() const { return count == 0 ? 0.0 : loss_sum / count; }
  double accuracy() const {
    return count == 0 ? 0.0 : 100.0 * static_cast<double>(correct) / count;
  }
};

}  // namespace

ExperimentResult train(const Task& task, TaskModel& model,
                       const TrainConfig& config) {
  config.validate();
  const auto start = std::chrono::steady_clock::now();

  ExperimentResult result;
  result.task = task.name;
  result.seed = config.seed;
  result.status = "ok";
  {
    nlohmann::json cfg;
    cfg["task"] = task.name;
    cfg["n"] = task.n;
    cfg["depth"] = task.depth;
    cfg["train_examples"] = task.train.size();
    cfg["test_examples"] = task.test.size();
    cfg["max_steps"] = task.max_steps;
    cfg["out_addr"] = task.out_addr;
    cfg["entries"] = task.entry_names;
    cfg["learning_rate"] = config.learning_rate;
    cfg["momentum"] = config.momentum;
    cfg["weight_decay"] = config.weight_decay;
    cfg["max_epochs"] = config.max_epochs;
    cfg["batch_size"] = config.batch_size;
    cfg["stop_train_accuracy"] = config.stop_train_accuracy;
    cfg["seed"] = config.seed;
    cfg["embed_dim"] = model.ctrl.config.embed_dim;
    cfg["hidden_dim"] = model.ctrl.config.hidden_dim;
    cfg["encoder"] = model.ctrl.config.encoder == EncoderKind::pooling
                         ? "pooling"
                         : "attention";
    result.config_json = cfg.dump();
  }

  SgdOptimizer opt(config.learning_rate, config.momentum,
                   config.weight_decay);
  for (Tensor& p : model.ctrl.parameters()) opt.add_parameter(p);
  opt.add_parameter(model.rho_logits, model.rho_mask);  // frozen library

  auto evaluate = [&](const TaskExample& ex, bool learn,
                      double loss_scale) -> std::pair<double, bool> {
    ControllerOutput out = controller_forward(model.ctrl, ex.tokens);
    MachineState s0 = controller_initial_state(out, model.entry_lines,
                                               task.reg_slots, model.layout);
    RunReport rep = run(std::move(s0), model.pm, model.machine,
                        task.max_steps, RunMode::soft);
    Tensor loss = loss_on_memory(
        rep, {{task.out_addr, one_hot(ex.gold, task.n)}});
    const double loss_v = loss.item();
    const bool correct =
        decoded_output(rep.expected_memory, task.out_addr, task.n) == ex.gold;
    if (learn && std::isfinite(loss_v)) backward(scale(loss, loss_scale));
    return {loss_v, correct};
  };

  Rng shuffle_rng(config.seed);
  std::vector<std::size_t> order(task.train.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  for (std::size_t epoch = 0; epoch < config.max_epochs; ++epoch) {
    shuffle_rng.shuffle(order);
    EvalStats train_stats;
    for (std::size_t at = 0; at < order.size();) {
      const std::size_t batch =
          std::min(config.batch_size, order.size() - at);
      opt.zero_grad();
      for (std::size_t k = 0; k < batch; ++k, ++at) {
        auto [loss_v, correct] = evaluate(task.train[order[at]], true,
                                          1.0 / static_cast<double>(batch));
        train_stats.loss_sum += loss_v;
        train_stats.correct += correct ? 1 : 0;
        train_stats.count += 1;
        if (!std::isfinite(loss_v)) train_stats.finite = false;
      }
      if (!train_stats.finite) break;
      opt.step();
    }

    EpochMetrics m;
    m.epoch = epoch + 1;
    m.train_loss = train_stats.mean_loss();
    m.train_accuracy = train_stats.accuracy();

    if (!train_stats.finite) {
      result.status = "diverged";
      result.epochs.push_back(m);
      break;
    }

    EvalStats test_stats;
    for (const TaskExample& ex : task.test) {
      auto [loss_v, correct] = evaluate(ex, false, 0.0);
      test_stats.loss_sum += loss_v;
      test_stats.correct += correct ? 1 : 0;
      test_stats.count += 1;
      if (!std::isfinite(loss_v)) test_stats.finite = false;
    }
    m.test_loss = test_stats.mean_loss();
    m.test_accuracy = test_stats.accuracy();
    result.epochs.push_back(m);
    if (!test_stats.finite) {
      result.status = "diverged";
      break;
    }
    if (m.train_accuracy >= config.stop_train_accuracy) break;
  }

  result.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start)
          .count();
  return result;
}

double parse_match_rate(const Task& task, const TaskModel& model,
                        const std::vector<TaskExample>& examples) {
  if (examples.empty()) return 0.0;
  std::size_t matches = 0;
  for (const TaskExample& ex : examples) {
    ControllerOutput out = controller_forward(model.ctrl, ex.tokens);
    if (argmax_range(out.selection.value(), 0, out.selection.size()) != ex.op)
      continue;
    std::vector<std::size_t> decoded;
    for (const Word& w : out.init_regs)
      decoded.push_back(argmax_range(w.value(), 0, w.size()));
    std::vector<std::size_t> expect = expected_slot_values(task, ex);
    bool direct = decoded == expect;
    bool swapped = false;
    if (!direct && task.op_commutative[ex.op] && expect.size() >= 2) {
      std::swap(expect[0], expect[1]);
      swapped = decoded == expect;
    }
    if (direct || swapped) ++matches;
  }
  return static_cast<double>(matches) / static_cast<double>(examples.size());
}

DepthStudyResult run_depth_study(const std::vector<std::size_t>& depths,
                                 const std::vector<std::uint64_t>& seeds,
                                 const StudyConfig& config) {
  if (depths.empty() || seeds.empty())
    throw std::invalid_argument("depth study needs depths and seeds");
  for (std::size_t depth : depths) {
    const std::size_t needed = 8 * depth + 3;
    if (config.step_budget < needed)
      throw std::invalid_argument(
          "step budget " + std::to_string(config.step_budget) +
          " cannot cover depth " + std::to_string(depth) + " (needs " +
          std::to_string(needed) + ")");
  }

  DepthStudyResult result;
  result.runs.resize(depths.size() * seeds.size());
  run_trials(result.runs.size(), [&](std::size_t trial) {
    const std::size_t d = trial / seeds.size();
    const std::size_t s = trial % seeds.size();
    // the dataset is fixed per depth; the model and shuffles vary by seed
    Task task = make_task(TaskKind::fib_depth, config.n, config.dataset_size,
                          /*seed=*/9000 + depths[d], depths[d]);
    TaskModel model = make_task_model(task, config.model, seeds[s]);
    TrainConfig train_cfg = config.train;
    train_cfg.seed = seeds[s];
    result.runs[trial] = train(task, model, train_cfg);
  });

  for (std::size_t d = 0; d < depths.size(); ++d) {
    DepthStudyRow row;
    row.depth = depths[d];
    for (std::size_t s = 0; s < seeds.size(); ++s)
      row.per_seed.push_back(
          result.runs[d * seeds.size() + s].final_test_accuracy());
    double mean = 0;
    for (double a : row.per_seed) mean += a;
    mean /= static_cast<double>(row.per_seed.size());
    double var = 0;
    for (double a : row.per_seed) var += (a - mean) * (a - mean);
    var /= static_cast<double>(row.per_seed.size());
    row.mean_accuracy = mean;
    row.stdev_accuracy = std::sqrt(var);
    result.rows.push_back(std::move(row));
  }
  return result;
}

// ---------------------------------------------------------------------
// Tables vs circuits

namespace {

// {n, n, n} lookup table for f(x, y) = 2x + y mod n.
Tensor routing_table(std::size_t n) {
  std::vector<double> data(n * n * n, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      data[(i * n + j) * n + (2 * i + j) % n] = 1.0;
  return Tensor(Shape{n, n, n}, std::move(data));
}

struct RoutingWeights {
  Tensor x_row, y_row;  // {2} each: slot mixture weights
};

RoutingWeights routing_weights(const Tensor& theta) {
  Tensor w = softmax(theta, 1);
  return {reshape(narrow(w, 0, 0, 1), Shape{2}),
          reshape(narrow(w, 0, 1, 1), Shape{2})};
}

// ans distribution {n} for one-hot slots u, v through the table backend
Tensor table_forward(const Tensor& theta, const Tensor& table, std::size_t u,
                     std::size_t v, std::size_t n) {
  RoutingWeights w = routing_weights(theta);
  Tensor slots = concat({reshape(one_hot(u, n), Shape{1, n}),
                         reshape(one_hot(v, n), Shape{1, n})},
                        0);
  Tensor xh = contract(w.x_row, slots, {{0, 0}});
  Tensor yh = contract(w.y_row, slots, {{0, 0}});
  return contract(yh, contract(xh, table, {{0, 0}}), {{0, 0}});
}

// answer bits {bits+1} through the circuit backend (2x + y exactly)
Tensor circuit_forward(const Tensor& theta, std::size_t u, std::size_t v,
                       std::size_t bits) {
  RoutingWeights w = routing_weights(theta);
  Tensor ub = bits_of(u, bits), vb = bits_of(v, bits);
  Tensor xh = add(mul(element(w.x_row, 0), ub), mul(element(w.x_row, 1), vb));
  Tensor yh = add(mul(element(w.y_row, 0), ub), mul(element(w.y_row, 1), vb));
  Tensor twice = narrow(shift_add_mul(xh, bits_of(2, bits)), 0, 0, bits);
  return ripple_add(twice, yh);
}

Tensor make_theta(std::uint64_t seed) {
  Rng rng(seed);
  std::vector<double> data(4);
  for (double& v : data) v = rng.normal() * 0.5;
  return Tensor(Shape{2, 2}, std::move(data), /*requires_grad=*/true);
}

}  // namespace

std::size_t routing_table_answer(std::size_t u, std::size_t v, bool swap,
                                 std::size_t n) {
  // routing forced to (effectively) a hard permutation via saturated logits
  double hi = 40.0;
  std::vector<double> data = swap ? std::vector<double>{-hi, hi, hi, -hi}
                                  : std::vector<double>{hi, -hi, -hi, hi};
  Tensor theta(Shape{2, 2}, std::move(data));
  Tensor ans = table_forward(theta, routing_table(n), u, v, n);
  return argmax_range(ans.value(), 0, n);
}

std::size_t routing_circuit_answer(std::size_t u, std::size_t v, bool swap,
                                   std::size_t bits) {
  double hi = 40.0;
  std::vector<double> data = swap ? std::vector<double>{-hi, hi, hi, -hi}
                                  : std::vector<double>{hi, -hi, -hi, hi};
  Tensor theta(Shape{2, 2}, std::move(data));
  return static_cast<std::size_t>(
      decode_bits(circuit_forward(theta, u, v, bits)));
}

TablesVsCircuitsResult run_tables_vs_circuits(const RoutingConfig& config) {
  if (config.n < 8) throw std::invalid_argument("routing task needs n >= 8");
  if ((1u << config.bits) < 4 * config.n)
    throw std::invalid_argument(
        "circuit width cannot hold out-of-range answers");

  const std::size_t n = config.n;
  const std::size_t in_range_total = (n / 4) * (n / 2);
  Task task = make_task(TaskKind::permutation_routing, n, in_range_total,
                        /*seed=*/7100);

  // out-of-range probe: operands shifted past the one-hot range
  struct Probe {
    std::size_t u, v, gold;
  };
  std::vector<Probe> oor;
  for (std::size_t x = n; x < n + n / 4; ++x)
    for (std::size_t y = n; y < n + n / 2; ++y)
      oor.push_back({y, x, 2 * x + y});  // same swapped presentation

  TablesVsCircuitsResult result;
  const Tensor table = routing_table(n);

  auto run_backend = [&](const std::string& backend, std::uint64_t seed) {
    BackendRun br;
    br.backend = backend;
    br.seed = seed;
    const bool is_table = backend == "table";
    Tensor theta = make_theta(seed);
    SgdOptimizer opt(is_table ? config.table_lr : config.circuit_lr, 0.0);
    opt.add_parameter(theta);

    const std::size_t unit_width = 1u << (config.bits + 1);
    auto forward_loss = [&](const TaskExample& ex) -> std::pair<Tensor, bool> {
      const std::size_t u = ex.tokens[0], v = ex.tokens[1];
      if (is_table) {
        Tensor ans = table_forward(theta, table, u, v, n);
        bool ok = argmax_range(ans.value(), 0, n) == ex.gold;
        return {cross_entropy(ans, one_hot(ex.gold, n)), ok};
      }
      Tensor ans = circuit_forward(theta, u, v, config.bits);
      bool ok = decode_bits(ans) == ex.gold;
      return {cross_entropy(binary_to_unit(ans), one_hot(ex.gold, unit_width)),
              ok};
    };

    Rng shuffle_rng(seed * 31 + 7);
    std::vector<std::size_t> order(task.train.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

    for (std::size_t epoch = 0; epoch < config.max_epochs; ++epoch) {
      shuffle_rng.shuffle(order);
      for (std::size_t idx : order) {
        opt.zero_grad();
        backward(forward_loss(task.train[idx]).first);
        opt.step();
      }
      // end-of-epoch metrics over both splits
      EpochMetrics m;
      m.epoch = epoch + 1;
      EvalStats train_stats, test_stats;
      for (const TaskExample& ex : task.train) {
        auto [loss, ok] = forward_loss(ex);
        train_stats.loss_sum += loss.item();
        train_stats.correct += ok ? 1 : 0;
        train_stats.count += 1;
      }
      for (const TaskExample& ex : task.test) {
        auto [loss, ok] = forward_loss(ex);
        test_stats.loss_sum += loss.item();
        test_stats.correct += ok ? 1 : 0;
        test_stats.count += 1;
      }
      m.train_loss = train_stats.mean_loss();
      m.train_accuracy = train_stats.accuracy();
      m.test_loss = test_stats.mean_loss();
      m.test_accuracy = test_stats.accuracy();
      br.epochs.push_back(m);
      if (br.epochs_to_perfect == 0 && m.train_accuracy == 100.0)
        br.epochs_to_perfect = epoch + 1;
    }

    if (is_table) {
      // operands past n-1 have no one-hot encoding at width n
      br.representable_out_of_range = false;
      br.out_of_range_accuracy = 0.0;
    } else {
      br.representable_out_of_range = true;
      std::size_t ok = 0;
      for (const Probe& p : oor) {
        Tensor ans = circuit_forward(theta, p.u, p.v, config.bits);
        if (decode_bits(ans) == p.gold) ++ok;
      }
      br.out_of_range_accuracy =
          100.0 * static_cast<double>(ok) / static_cast<double>(oor.size());
    }
    return br;
  };

  std::vector<BackendRun> runs(config.seeds.size() * 2);
  run_trials(runs.size(), [&](std::size_t i) {
    const bool table_half = i < config.seeds.size();
    const std::uint64_t seed = config.seeds[i % config.seeds.size()];
    runs[i] = run_backend(table_half ? "table" : "circuit", seed);
  });
  result.runs = std::move(runs);

  double epoch_sum = 0;
  double oor_sum = 0;
  for (const BackendRun& r : result.runs) {
    if (r.backend == "table")
      epoch_sum += r.epochs_to_perfect == 0
                       ? static_cast<double>(config.max_epochs + 1)
                       : static_cast<double>(r.epochs_to_perfect);
    else
      oor_sum += r.out_of_range_accuracy;
  }
  result.table_mean_epochs_to_perfect =
      epoch_sum / static_cast<double>(config.seeds.size());
  result.circuit_mean_out_of_range_accuracy =
      oor_sum / static_cast<double>(config.seeds.size());
  return result;
}

// ---------------------------------------------------------------------
// Machine-readable outputs

std::string metrics_csv(const std::vector<EpochMetrics>& epochs) {
  std::string out = "epoch,split,accuracy,loss\n";
  for (const EpochMetrics& m : epochs) {
    out += std::to_string(m.epoch) + ",train," + format_double(m.train_accuracy) +
           "," + format_double(m.train_loss) + "\n";
    out += std::to_string(m.epoch) + ",test," + format_double(m.test_accuracy) +
           "," + format_double(m.test_loss) + "\n";
  }
  return out;
}

std::string depth_study_csv(const DepthStudyResult& result) {
  std::size_t seeds = 0;
  for (const auto& row : result.rows) seeds = std::max(seeds, row.per_seed.size());
  std::string out = "depth,mean_accuracy,stdev_accuracy";
  for (std::size_t s = 0; s < seeds; ++s) out += ",seed" + std::to_string(s);
  out += "\n";
  for (const auto& row : result.rows) {
    out += std::to_string(row.depth) + "," + format_double(row.mean_accuracy) +
           "," + format_double(row.stdev_accuracy);
    for (double a : row.per_seed) out += "," + format_double(a);
    out += "\n";
  }
  return out;
}

std::string tables_vs_circuits_csv(const TablesVsCircuitsResult& result) {
  std::string out = "backend,seed,epoch,accuracy,loss,out_of_range_accuracy\n";
  for (const BackendRun& r : result.runs) {
    for (const EpochMetrics& m : r.epochs) {
      out += r.backend + "," + std::to_string(r.seed) + "," +
             std::to_string(m.epoch) + "," + format_double(m.train_accuracy) +
             "," + format_double(m.train_loss) + "," +
             format_double(r.out_of_range_accuracy) + "\n";
    }
  }
  return out;
}

std::string experiment_summary_json(const ExperimentResult& result) {
  nlohmann::json j;
  j["task"] = result.task;
  j["seed"] = result.seed;
  j["status"] = result.status;
  j["epochs"] = result.epochs.size();
  j["final_test_accuracy"] = result.final_test_accuracy();
  j["best_test_accuracy"] = result.best_test_accuracy();
  j["wall_seconds"] = result.wall_seconds;
  j["config"] = result.config_json.empty()
                    ? nlohmann::json::object()
                    : nlohmann::json::parse(result.config_json);
  return j.dump(2);
}

}  // namespace difc

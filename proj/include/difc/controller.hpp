#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "difc/machine.hpp"
#include "difc/tensor.hpp"

namespace difc {

enum class EncoderKind {
  pooling,    // mean over token embeddings (default: deterministic, fast)
  attention,  // single-head attention pool with a learned query
};

struct ControllerConfig {
  std::size_t vocab_size{0};
  std::size_t max_tokens{16};  // positional table size
  std::size_t embed_dim{16};
  std::size_t hidden_dim{32};
  std::size_t num_entries{1};  // program-selection head width
  std::size_t n{16};           // Word width of the register heads
  // Tokens with id < digit_tokens denote the value id mod n; all other
  // tokens read as 0. The register heads can only point at sequence
  // positions, so this map is what turns a pointed-at token into a Word.
  std::size_t digit_tokens{0};
  std::vector<std::size_t> reg_slots;  // registers fed by the pointer heads
  EncoderKind encoder{EncoderKind::pooling};

  // vocab/embed/hidden/entries > 0; slots unique, >= 2 (r0 and r1 are
  // reserved), < n; max_tokens > 0; digit_tokens <= vocab_size
  void validate(std::size_t registers) const;
};

/// A parameterized map from token sequences to a program selection and
/// initial register Words: token + position embeddings, pooled, pushed
/// through two tanh layers, read out by a softmax selection head and one
/// pointer head per register slot. A pointer head emits attention over
/// sequence positions and the register Word is the attention-weighted
/// mixture of the pointed-at tokens' digit values, so a register can
/// only ever hold digits that appear in the question. Unconstrained
/// dense heads can answer correctly without parsing (answer supervision
/// admits re-encodings such as "result in one register, 0 in the
/// other"); pointers make the operand binding itself the only solution.
struct Controller {
  ControllerConfig config;
  Tensor token_embed;  // {vocab, embed}
  Tensor pos_embed;    // {max_tokens, embed}
  Tensor attn_query;   // {embed}; used by the attention encoder only
  Tensor w1, b1;       // {embed, hidden}, {hidden}
  Tensor w2, b2;       // {hidden, hidden}, {hidden}
  Tensor select_w;     // {hidden, num_entries}
  Tensor select_b;     // {num_entries}
  std::vector<Tensor> reg_w;  // per slot: {hidden, embed} pointer query
  std::vector<Tensor> reg_b;  // per slot: {embed}

  std::vector<Tensor> parameters() const;
};

/// Deterministic initialization: weights ~ N(0, 1/sqrt(fan_in)) from the
/// seeded generator, biases zero. All parameters require gradients.
Controller make_controller(const ControllerConfig& config, std::uint64_t seed);

struct ControllerOutput {
  Tensor selection;            // {num_entries}, a distribution
  std::vector<Word> init_regs;  // one Word {n} per configured slot
};

/// Forward pass; differentiable throughout. Throws std::invalid_argument
/// on an empty sequence, a token id >= vocab_size, or more tokens than the
/// positional table holds.
ControllerOutput controller_forward(const Controller& ctrl,
                                    const std::vector<std::size_t>& tokens);

/// Machine initialization from controller outputs: the counter is the
/// selection-weighted mixture of entry lines, configured slots take their
/// head Words, r0 holds the constant 1, and every other register and
/// memory cell starts at dirac 0.
MachineState controller_initial_state(const ControllerOutput& out,
                                      const std::vector<std::size_t>& entry_lines,
                                      const std::vector<std::size_t>& reg_slots,
                                      const MachineLayout& layout);

}  // namespace difc

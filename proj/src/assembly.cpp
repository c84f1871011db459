#include "difc/assembly.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <sstream>

namespace difc {

namespace {

struct OpInfo {
  Opcode op;
  const char* name;
  std::size_t arity;
  bool machine;
};

constexpr std::array<OpInfo, 16> kOps{{
    {Opcode::halt, "halt", 0, true},
    {Opcode::jump, "jump", 2, true},
    {Opcode::jumpr, "jumpr", 2, true},
    {Opcode::store, "store", 1, true},
    {Opcode::call, "call", 1, false},
    {Opcode::ret, "ret", 0, false},
    {Opcode::read, "read", 2, true},
    {Opcode::write, "write", 2, true},
    {Opcode::copy, "copy", 2, true},
    {Opcode::set, "set", 2, true},
    {Opcode::inc, "inc", 2, true},
    {Opcode::dec, "dec", 2, true},
    {Opcode::add, "add", 3, true},
    {Opcode::sub, "sub", 3, true},
    {Opcode::max, "max", 3, true},
    {Opcode::min, "min", 3, true},
}};

const OpInfo& info(Opcode op) {
  for (const auto& i : kOps)
    if (i.op == op) return i;
  throw std::logic_error("unknown opcode enum value");
}

bool is_identifier(const std::string& s) {
  if (s.empty() || (!std::isalpha(static_cast<unsigned char>(s[0])) && s[0] != '_'))
    return false;
  return std::all_of(s.begin(), s.end(), [](char c) {
    return std::isalnum(static_cast<unsigned char>(c)) || c == '_';
  });
}

bool is_number(const std::string& s) {
  return !s.empty() && std::all_of(s.begin(), s.end(), [](char c) {
    return std::isdigit(static_cast<unsigned char>(c));
  });
}

std::size_t to_number(const std::string& s) {
  return static_cast<std::size_t>(std::stoull(s));
}

}  // namespace

const char* opcode_name(Opcode op) { return info(op).name; }

std::optional<Opcode> opcode_from_name(const std::string& name) {
  for (const auto& i : kOps)
    if (name == i.name) return i.op;
  return std::nullopt;
}

std::size_t opcode_arity(Opcode op) { return info(op).arity; }

bool is_machine_opcode(Opcode op) { return info(op).machine; }

const std::vector<std::string>& machine_opcode_names() {
  static const std::vector<std::string> names = [] {
    std::vector<std::string> v;
    for (const auto& i : kOps)
      if (i.machine) v.push_back(i.name);
    return v;
  }();
  return names;
}

std::size_t machine_opcode_index(Opcode op) {
  std::size_t idx = 0;
  for (const auto& i : kOps) {
    if (i.op == op) {
      if (!i.machine)
        throw std::logic_error(std::string(i.name) + " is not a machine opcode");
      return idx;
    }
    if (i.machine) ++idx;
  }
  throw std::logic_error("unknown opcode enum value");
}

Opcode machine_opcode_at(std::size_t index) {
  std::size_t idx = 0;
  for (const auto& i : kOps) {
    if (!i.machine) continue;
    if (idx == index) return i.op;
    ++idx;
  }
  throw std::out_of_range("machine opcode index out of range");
}

ParseError::ParseError(std::size_t line_, std::size_t col_, const std::string& msg)
    : std::runtime_error("line " + std::to_string(line_) + ", col " +
                         std::to_string(col_) + ": " + msg),
      line(line_),
      col(col_) {}

namespace {

struct Token {
  std::string text;
  std::size_t col;  // 1-based
};

std::vector<Token> tokenize(const std::string& raw) {
  std::vector<Token> out;
  std::string line = raw;
  if (auto pos = line.find('#'); pos != std::string::npos) line.resize(pos);
  std::size_t i = 0;
  while (i < line.size()) {
    if (std::isspace(static_cast<unsigned char>(line[i]))) {
      ++i;
      continue;
    }
    std::size_t start = i;
    while (i < line.size() && !std::isspace(static_cast<unsigned char>(line[i])))
      ++i;
    out.push_back({line.substr(start, i - start), start + 1});
  }
  return out;
}

/// What a given operand slot of an opcode may contain.
enum class Slot { reg, imm, target, name };

std::vector<Slot> slots_for(Opcode op) {
  switch (op) {
    case Opcode::halt:
    case Opcode::ret:
      return {};
    case Opcode::jump:
      return {Slot::reg, Slot::target};
    case Opcode::jumpr:
      return {Slot::reg, Slot::reg};
    case Opcode::store:
      return {Slot::reg};
    case Opcode::call:
      return {Slot::name};
    case Opcode::set:
      return {Slot::imm, Slot::reg};
    case Opcode::read:
    case Opcode::write:
    case Opcode::copy:
    case Opcode::inc:
    case Opcode::dec:
      return {Slot::reg, Slot::reg};
    case Opcode::add:
    case Opcode::sub:
    case Opcode::max:
    case Opcode::min:
      return {Slot::reg, Slot::reg, Slot::reg};
  }
  return {};
}

Operand parse_operand(Slot slot, const Token& tok, std::size_t lineno,
                      std::size_t n) {
  const std::string& t = tok.text;
  switch (slot) {
    case Slot::reg: {
      if (t.size() >= 2 && t[0] == 'r' && is_number(t.substr(1)))
        return Operand::reg(to_number(t.substr(1)));
      if (is_number(t)) return Operand::reg(to_number(t));
      throw ParseError(lineno, tok.col, "expected a register, got '" + t + "'");
    }
    case Slot::imm: {
      if (!is_number(t))
        throw ParseError(lineno, tok.col, "expected an immediate, got '" + t + "'");
      const std::size_t v = to_number(t);
      if (n > 0 && v >= n)
        throw ParseError(lineno, tok.col,
                         "immediate " + t + " out of range for word size " +
                             std::to_string(n));
      return Operand::imm(v);
    }
    case Slot::target: {
      if (is_number(t)) return Operand::imm(to_number(t));
      if (is_identifier(t)) return Operand::label(t);
      throw ParseError(lineno, tok.col, "expected a line or label, got '" + t + "'");
    }
    case Slot::name: {
      if (is_identifier(t)) return Operand::label(t);
      throw ParseError(lineno, tok.col, "expected a program name, got '" + t + "'");
    }
  }
  throw ParseError(lineno, tok.col, "unparseable operand '" + t + "'");
}

}  // namespace

SymbolicProgram parse(const std::string& text, const std::string& name,
                      std::size_t n) {
  SymbolicProgram prog;
  prog.name = name;

  std::istringstream in(text);
  std::string raw;
  std::size_t lineno = 0;
  std::vector<std::pair<std::string, std::size_t>> label_sites;  // for dup checks

  while (std::getline(in, raw)) {
    ++lineno;
    auto tokens = tokenize(raw);
    std::size_t ti = 0;
    while (ti < tokens.size() && tokens[ti].text.back() == ':') {
      std::string label = tokens[ti].text.substr(0, tokens[ti].text.size() - 1);
      if (!is_identifier(label))
        throw ParseError(lineno, tokens[ti].col, "bad label '" + label + "'");
      if (prog.labels.count(label))
        throw ParseError(lineno, tokens[ti].col,
                         "duplicate label '" + label + "'");
      prog.labels[label] = prog.lines.size();
      label_sites.push_back({label, lineno});
      ++ti;
    }
    if (ti == tokens.size()) continue;

    auto op = opcode_from_name(tokens[ti].text);
    if (!op)
      throw ParseError(lineno, tokens[ti].col,
                       "unknown opcode '" + tokens[ti].text + "'");
    const auto slots = slots_for(*op);
    if (tokens.size() - ti - 1 != slots.size())
      throw ParseError(lineno, tokens[ti].col,
                       std::string(opcode_name(*op)) + " takes " +
                           std::to_string(slots.size()) + " operands, got " +
                           std::to_string(tokens.size() - ti - 1));
    SymbolicInstruction inst;
    inst.op = *op;
    for (std::size_t s = 0; s < slots.size(); ++s)
      inst.args.push_back(parse_operand(slots[s], tokens[ti + 1 + s], lineno, n));
    prog.lines.push_back(std::move(inst));
  }

  if (prog.lines.empty()) throw ParseError(lineno, 1, "empty program");
  // Guard against falling off the end. A trailing ret never falls through
  // (it always jumps via r0), so it needs no guard and keeps the line budget.
  if (prog.lines.back().op != Opcode::halt && prog.lines.back().op != Opcode::ret) {
    SymbolicInstruction h;
    h.op = Opcode::halt;
    prog.lines.push_back(h);
  }

  for (const auto& [label, site] : label_sites) {
    if (prog.labels[label] >= prog.lines.size())
      throw ParseError(site, 1, "label '" + label + "' has no instruction");
  }
  for (std::size_t li = 0; li < prog.lines.size(); ++li) {
    const auto& inst = prog.lines[li];
    if (inst.op != Opcode::jump) continue;
    const Operand& target = inst.args[1];
    if (target.kind == Operand::Kind::label && !prog.labels.count(target.name))
      throw ParseError(li + 1, 1, "undefined label '" + target.name + "'");
    if (target.kind == Operand::Kind::imm && target.value >= prog.lines.size())
      throw ParseError(li + 1, 1,
                       "jump target " + std::to_string(target.value) +
                           " beyond program end");
  }
  return prog;
}

std::string pretty_print(const SymbolicProgram& p) {
  std::map<std::size_t, std::vector<std::string>> labels_at;
  for (const auto& [name, line] : p.labels) labels_at[line].push_back(name);

  std::ostringstream os;
  for (std::size_t li = 0; li < p.lines.size(); ++li) {
    if (auto it = labels_at.find(li); it != labels_at.end())
      for (const auto& l : it->second) os << l << ":\n";
    const auto& inst = p.lines[li];
    os << "    " << opcode_name(inst.op);
    for (const auto& a : inst.args) {
      os << ' ';
      if (a.kind == Operand::Kind::label)
        os << a.name;
      else
        os << a.value;
    }
    os << '\n';
  }
  return os.str();
}

std::vector<std::string> lint(const SymbolicProgram& p) {
  const bool uses_calls =
      std::any_of(p.lines.begin(), p.lines.end(), [](const auto& i) {
        return i.op == Opcode::call || i.op == Opcode::ret;
      });
  std::vector<std::string> out;
  for (std::size_t li = 0; li < p.lines.size(); ++li) {
    const auto& inst = p.lines[li];
    std::size_t dst_slot;
    switch (inst.op) {
      case Opcode::store: dst_slot = 0; break;
      case Opcode::read:
      case Opcode::copy:
      case Opcode::set:
      case Opcode::inc:
      case Opcode::dec: dst_slot = 1; break;
      case Opcode::add:
      case Opcode::sub:
      case Opcode::max:
      case Opcode::min: dst_slot = 2; break;
      default: continue;
    }
    const std::size_t dst = inst.args[dst_slot].value;
    if (dst == 0) {
      out.push_back("line " + std::to_string(li) + ": " + opcode_name(inst.op) +
                    " overwrites r0, the constant-true register");
    } else if (dst == 1 && uses_calls) {
      out.push_back("line " + std::to_string(li) + ": " + opcode_name(inst.op) +
                    " overwrites r1, the return-address register");
    }
  }
  return out;
}

Library link(const std::vector<SymbolicProgram>& programs, std::size_t max_lines) {
  Library lib;
  std::map<std::string, std::size_t> lowered_len;
  for (const auto& p : programs) {
    if (lib.entry_points.count(p.name))
      throw LinkError("duplicate program name '" + p.name + "'");
    std::size_t len = 0;
    for (const auto& inst : p.lines)
      len += (inst.op == Opcode::call || inst.op == Opcode::ret) ? 2 : 1;
    lib.entry_points[p.name] = 0;  // filled below; reserves the name
    lowered_len[p.name] = len;
  }

  std::size_t base = 0;
  for (const auto& p : programs) {
    lib.entry_points[p.name] = base;
    lib.program_ranges[p.name] = {base, base + lowered_len[p.name]};
    lib.program_order.push_back(p.name);
    base += lowered_len[p.name];
  }
  if (base > max_lines)
    throw LinkError("concatenated length " + std::to_string(base) +
                    " exceeds the line capacity " + std::to_string(max_lines));

  for (const auto& p : programs) {
    const std::size_t pbase = lib.entry_points[p.name];
    // machine line offset of every symbolic line
    std::vector<std::size_t> machine_at(p.lines.size() + 1);
    std::size_t off = 0;
    for (std::size_t li = 0; li < p.lines.size(); ++li) {
      machine_at[li] = off;
      off += (p.lines[li].op == Opcode::call || p.lines[li].op == Opcode::ret) ? 2 : 1;
    }
    machine_at[p.lines.size()] = off;

    for (const auto& inst : p.lines) {
      switch (inst.op) {
        case Opcode::call: {
          const std::string& callee = inst.args[0].name;
          auto it = lib.entry_points.find(callee);
          if (it == lib.entry_points.end())
            throw LinkError("program '" + p.name + "' calls undefined program '" +
                            callee + "'");
          SymbolicInstruction store_ra;
          store_ra.op = Opcode::store;
          store_ra.args = {Operand::reg(1)};
          SymbolicInstruction jmp;
          jmp.op = Opcode::jump;
          jmp.args = {Operand::reg(0), Operand::imm(it->second)};
          lib.lines.push_back(store_ra);
          lib.lines.push_back(jmp);
          break;
        }
        case Opcode::ret: {
          SymbolicInstruction bump;
          bump.op = Opcode::inc;
          bump.args = {Operand::reg(1), Operand::reg(1)};
          SymbolicInstruction jmp;
          jmp.op = Opcode::jumpr;
          jmp.args = {Operand::reg(0), Operand::reg(1)};
          lib.lines.push_back(bump);
          lib.lines.push_back(jmp);
          break;
        }
        case Opcode::jump: {
          SymbolicInstruction jmp = inst;
          Operand& target = jmp.args[1];
          if (target.kind == Operand::Kind::label) {
            auto it = p.labels.find(target.name);
            if (it == p.labels.end())
              throw LinkError("undefined label '" + target.name + "' in '" +
                              p.name + "'");
            target = Operand::imm(pbase + machine_at[it->second]);
          } else {
            target = Operand::imm(pbase + machine_at[target.value]);
          }
          lib.lines.push_back(jmp);
          break;
        }
        default:
          lib.lines.push_back(inst);
      }
    }
  }
  return lib;
}

SymbolicProgram library_as_program(const Library& lib, const std::string& name) {
  SymbolicProgram p;
  p.name = name;
  p.lines = lib.lines;
  for (const auto& [pname, entry] : lib.entry_points) p.labels[pname] = entry;
  return p;
}

}  // namespace difc

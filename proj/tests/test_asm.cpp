#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>

#include "corpus_util.hpp"
#include "difc/assembly.hpp"
#include "difc/rng.hpp"

using namespace difc;
using namespace difc::testutil;

TEST_CASE("the fib loop parses to eight lines with its label on line 1") {
  auto p = parse(read_file(corpus_path("fib_once.asm")), "fib_once", 16);
  REQUIRE(p.lines.size() == 8);  // seven written lines plus the appended halt
  CHECK(p.labels.at("fib_loop") == 1);
  CHECK(p.lines[0].op == Opcode::inc);
  CHECK(p.lines[1].op == Opcode::write);
  CHECK(p.lines[6].op == Opcode::jump);
  CHECK(p.lines[6].args[1] == Operand::label("fib_loop"));
  CHECK(p.lines[7].op == Opcode::halt);
}

TEST_CASE("minimal programs and register syntax variants") {
  auto h = parse("halt");
  CHECK(h.lines.size() == 1);
  CHECK(h.lines[0].op == Opcode::halt);

  auto bare = parse("copy 9 2\nset 3 8\nstore 7");
  auto prefixed = parse("copy r9 r2\nset 3 r8\nstore r7");
  CHECK(bare.lines == prefixed.lines);
}

TEST_CASE("parse diagnostics are distinct and positioned") {
  CHECK_THROWS_WITH_AS(parse("jump 4 nowhere"), doctest::Contains("nowhere"),
                       ParseError);
  CHECK_THROWS_WITH_AS(parse("frob 1 2"), doctest::Contains("unknown opcode"),
                       ParseError);
  CHECK_THROWS_WITH_AS(parse("add 1 2"), doctest::Contains("takes 3 operands"),
                       ParseError);
  CHECK_THROWS_WITH_AS(parse("a:\nhalt\na:\nhalt"),
                       doctest::Contains("duplicate label"), ParseError);
  CHECK_THROWS_WITH_AS(parse("set 16 2", "main", 16),
                       doctest::Contains("out of range"), ParseError);
  CHECK_THROWS_AS(parse(""), ParseError);
  CHECK_THROWS_WITH_AS(parse("halt\nend:"), doctest::Contains("no instruction"),
                       ParseError);

  try {
    parse("halt\n  bogus 1");
    FAIL("expected a parse error");
  } catch (const ParseError& e) {
    CHECK(e.line == 2);
    CHECK(e.col == 3);
  }
}

TEST_CASE("parse and pretty_print are inverse on the whole corpus") {
  for (const auto& lib : load_manifest()) {
    for (const auto& f : lib.program_files) {
      CAPTURE(f);
      auto p = parse(read_file(corpus_path(f)), program_name_of(f), lib.n);
      auto reparsed = parse(pretty_print(p), p.name, lib.n);
      CHECK(reparsed == p);
    }
  }
}

TEST_CASE("linking expands call and ret onto store, jump, inc, jumpr") {
  auto main_p = parse("call helper\nhalt", "main");
  auto helper = parse("inc 2 2\nret", "helper");
  Library lib = link({main_p, helper}, 16);

  REQUIRE(lib.lines.size() == 6);
  CHECK(lib.entry_points.at("main") == 0);
  CHECK(lib.entry_points.at("helper") == 3);

  CHECK(lib.lines[0].op == Opcode::store);
  CHECK(lib.lines[0].args[0] == Operand::reg(1));
  CHECK(lib.lines[1].op == Opcode::jump);
  CHECK(lib.lines[1].args[0] == Operand::reg(0));
  CHECK(lib.lines[1].args[1] == Operand::imm(3));
  CHECK(lib.lines[2].op == Opcode::halt);
  CHECK(lib.lines[3].op == Opcode::inc);
  CHECK(lib.lines[4].op == Opcode::inc);
  CHECK(lib.lines[4].args == std::vector<Operand>{Operand::reg(1), Operand::reg(1)});
  CHECK(lib.lines[5].op == Opcode::jumpr);
  CHECK(lib.lines[5].args == std::vector<Operand>{Operand::reg(0), Operand::reg(1)});
}

TEST_CASE("link resolves labels across lowering and validates capacity") {
  // the call before the label shifts machine lines by one
  auto p = parse("call helper\ntail:\ninc 2 2\njump 0 tail", "main");
  auto helper = parse("ret", "helper");
  Library lib = link({p, helper}, 16);
  // machine: store, jump, inc(tail=2), jump->2, halt | inc, jumpr, halt
  CHECK(lib.lines[3].args[1] == Operand::imm(2));

  CHECK_THROWS_WITH_AS(link({parse("call sort2\nhalt", "main")}, 16),
                       doctest::Contains("sort2"), LinkError);
  CHECK_THROWS_AS(link({parse("inc 2 2\ninc 2 2\nhalt", "main")}, 2), LinkError);
  CHECK_THROWS_AS(link({parse("halt", "a"), parse("halt", "a")}, 16), LinkError);
}

TEST_CASE("single program without calls links unchanged at entry 0") {
  auto p = parse(read_file(corpus_path("arith_demo.asm")), "arith_demo", 16);
  Library lib = link({p}, 16);
  CHECK(lib.entry_points.at("arith_demo") == 0);
  CHECK(lib.lines == p.lines);
}

TEST_CASE("lint guards the convention registers") {
  auto clobber0 = parse("set 3 0\nhalt");
  auto warnings = lint(clobber0);
  REQUIRE(warnings.size() == 1);
  CHECK(warnings[0].find("r0") != std::string::npos);

  auto clobber1 = parse("call f\ninc 3 1\nhalt");
  warnings = lint(clobber1);
  REQUIRE(warnings.size() == 1);
  CHECK(warnings[0].find("r1") != std::string::npos);

  // without calls in play, r1 is an ordinary register
  auto fib = parse(read_file(corpus_path("fib_once.asm")), "fib_once", 16);
  CHECK(lint(fib).empty());

  for (const auto& f : {"pair_main.asm", "double.asm", "bump.asm"}) {
    CAPTURE(f);
    CHECK(lint(parse(read_file(corpus_path(f)), program_name_of(f), 16)).empty());
  }
}

TEST_CASE("oracle: halt-only program stops immediately, state unchanged") {
  Library lib = link({parse("halt", "main")}, 16);
  auto st = oracle_run(lib, "main", {5, 6}, {0, 0, 7}, 16, 8, 8, 100);
  CHECK(st.status == RunStatus::halted);
  CHECK(st.steps == 1);
  CHECK(st.mem[0] == 5);
  CHECK(st.mem[1] == 6);
  CHECK(st.regs[2] == 7);
  CHECK(st.regs[0] == 1);  // convention register forced on
}

TEST_CASE("oracle: fib tape emits 1 1 2 3 5 8") {
  auto p = parse(read_file(corpus_path("fib_tape.asm")), "fib_tape", 16);
  Library lib = link({p}, 16);
  auto st = oracle_run(lib, "fib_tape", {}, {0, 0, 0, 0, 0, 6}, 16, 8, 8, 200);
  REQUIRE(st.status == RunStatus::halted);
  const std::vector<std::size_t> want{1, 1, 2, 3, 5, 8};
  for (std::size_t i = 0; i < want.size(); ++i) CHECK(st.mem[i] == want[i]);
}

TEST_CASE("oracle: the one-pass fib loop matches a hand trace") {
  auto p = parse(read_file(corpus_path("fib_once.asm")), "fib_once", 16);
  Library lib = link({p}, 16);
  auto st = oracle_run(lib, "fib_once", {}, {}, 16, 8, 8, 50);
  REQUIRE(st.status == RunStatus::halted);
  CHECK(st.steps == 8);
  CHECK(st.mem[0] == 1);
  CHECK(st.regs[1] == 1);
  CHECK(st.regs[2] == 1);
  CHECK(st.regs[3] == 1);
}

TEST_CASE("oracle: three chained fib iterations take 6 and 2 to 18") {
  const char* text =
      "add 2 3 6\ncopy 3 2\ncopy 6 3\n"
      "add 2 3 6\ncopy 3 2\ncopy 6 3\n"
      "add 2 3 6\ncopy 3 2\ncopy 6 3\n"
      "set 0 4\nwrite 4 3\nhalt";
  Library lib = link({parse(text, "fib3", 32)}, 32);
  auto st = oracle_run(lib, "fib3", {}, {0, 0, 6, 2}, 32, 8, 8, 50);
  REQUIRE(st.status == RunStatus::halted);
  CHECK(st.mem[0] == 18);  // 6,2 → 8 → 10 → 18
}

TEST_CASE("oracle: call pair computes 2x+1 through two returns") {
  auto lib = link_corpus_library([] {
    for (const auto& l : load_manifest())
      if (l.name == "call_pair") return l;
    throw std::runtime_error("call_pair missing from manifest");
  }());
  for (std::size_t x = 0; x <= 7; ++x) {
    auto st = oracle_run(lib, "pair_main", {}, {0, 0, x}, 16, 8, 8, 50);
    REQUIRE(st.status == RunStatus::halted);
    CHECK(st.mem[0] == 2 * x + 1);
  }
}

TEST_CASE("oracle: bubble sort agrees with std::sort") {
  auto p = parse(read_file(corpus_path("bubble_sort.asm")), "bubble_sort", 32);
  Library lib = link({p}, 32);
  Rng rng(101);
  for (int trial = 0; trial < 30; ++trial) {
    const std::size_t len = 2 + rng.next_below(5);
    std::vector<std::size_t> arr(len);
    for (auto& v : arr) v = rng.next_below(32);
    auto st = oracle_run(lib, "bubble_sort", arr, {0, 0, len}, 32, 13, 8, 2000);
    REQUIRE(st.status == RunStatus::halted);
    std::vector<std::size_t> want = arr;
    std::sort(want.begin(), want.end());
    for (std::size_t i = 0; i < len; ++i) CHECK(st.mem[i] == want[i]);
  }
}

TEST_CASE("oracle: quicksort agrees with std::sort") {
  auto p = parse(read_file(corpus_path("quicksort.asm")), "quicksort", 64);
  Library lib = link({p}, 64);
  REQUIRE(lib.lines.size() <= 64);

  std::vector<std::vector<std::size_t>> cases{
      {3, 1, 2, 0}, {0, 1, 2, 3}, {3, 2, 1, 0}, {5, 5, 5, 5},
      {7, 1, 7, 1}, {9, 4},       {2, 2},       {6, 5, 4, 3, 2, 1},
  };
  Rng rng(103);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<std::size_t> arr(2 + rng.next_below(5));
    for (auto& v : arr) v = rng.next_below(30);
    cases.push_back(arr);
  }
  for (const auto& arr : cases) {
    CAPTURE(arr.size());
    auto st = oracle_run(lib, "quicksort", arr, {0, 0, arr.size()}, 64, 15, 64, 5000);
    REQUIRE(st.status == RunStatus::halted);
    std::vector<std::size_t> want = arr;
    std::sort(want.begin(), want.end());
    for (std::size_t i = 0; i < want.size(); ++i) CHECK(st.mem[i] == want[i]);
  }
}

TEST_CASE("oracle: timeout and fault statuses") {
  Library spin = link({parse("loop:\njump 0 loop", "main")}, 16);
  auto st = oracle_run(spin, "main", {}, {}, 16, 8, 8, 25);
  CHECK(st.status == RunStatus::timeout);
  CHECK(st.steps == 25);

  Library stray = link({parse("set 15 2\njumpr 0 2", "main")}, 16);
  auto st2 = oracle_run(stray, "main", {}, {}, 16, 8, 8, 25);
  CHECK(st2.status == RunStatus::fault);

  CHECK_THROWS_AS(oracle_run(spin, "missing", {}, {}, 16, 8, 8, 25),
                  std::invalid_argument);
}

TEST_CASE("machine opcode table is stable and excludes the macros") {
  const auto& names = machine_opcode_names();
  REQUIRE(names.size() == 14);
  CHECK(names[0] == "halt");
  CHECK(machine_opcode_index(Opcode::halt) == 0);
  CHECK(machine_opcode_at(machine_opcode_index(Opcode::jumpr)) == Opcode::jumpr);
  CHECK(std::find(names.begin(), names.end(), "call") == names.end());
  CHECK(std::find(names.begin(), names.end(), "ret") == names.end());
  CHECK_THROWS_AS(machine_opcode_index(Opcode::call), std::logic_error);
}

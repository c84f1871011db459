#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <cstring>
#include <sstream>

#include <json.hpp>

#include "corpus_util.hpp"
#include "difc/program_matrix.hpp"
#include "difc/words.hpp"

using namespace difc;
using namespace difc::testutil;

namespace {

bool field_is_dirac_at(const ProgramMatrix& pm, std::size_t line,
                       std::size_t offset, std::size_t width, std::size_t hot) {
  const std::size_t base = line * pm.layout.row_width() + offset;
  for (std::size_t k = 0; k < width; ++k) {
    const double want = k == hot ? 1.0 : 0.0;
    if (pm.rho.value()[base + k] != want) return false;
  }
  return true;
}

std::string to_bytes(const ProgramMatrix& pm) {
  std::ostringstream os(std::ios::binary);
  save_program_matrix(pm, os);
  return os.str();
}

}  // namespace

TEST_CASE("layout offsets and validation") {
  MachineLayout lay{16, 8, 8};
  lay.validate();
  CHECK(lay.opcode_offset() == 0);
  CHECK(lay.a1_offset() == 14);
  CHECK(lay.a2_offset() == 30);
  CHECK(lay.dst_offset() == 46);
  CHECK(lay.row_width() == 62);

  CHECK_THROWS_AS((MachineLayout{16, 17, 8}.validate()), std::invalid_argument);
  CHECK_THROWS_AS((MachineLayout{16, 1, 8}.validate()), std::invalid_argument);
  CHECK_THROWS_AS((MachineLayout{16, 8, 17}.validate()), std::invalid_argument);
  CHECK_THROWS_AS((MachineLayout{16, 8, 0}.validate()), std::invalid_argument);
  CHECK_THROWS_AS((MachineLayout{1, 1, 1}.validate()), std::invalid_argument);
}

TEST_CASE("halt-only program compiles to a single dirac row") {
  MachineLayout lay{16, 8, 8};
  Library lib = link({parse("halt", "main")}, lay.n);
  ProgramMatrix pm = compile(lib, lay);

  REQUIRE(pm.lines() == 1);
  REQUIRE(pm.rho.shape() == Shape{1, 62});
  CHECK(field_is_dirac_at(pm, 0, lay.opcode_offset(), 14,
                          machine_opcode_index(Opcode::halt)));
  // unused operand fields default to r0, making the register write a no-op
  CHECK(field_is_dirac_at(pm, 0, lay.a1_offset(), 16, 0));
  CHECK(field_is_dirac_at(pm, 0, lay.a2_offset(), 16, 0));
  CHECK(field_is_dirac_at(pm, 0, lay.dst_offset(), 16, 0));
  CHECK(pm.programs.size() == 1);
  CHECK(pm.programs[0].name == "main");
  CHECK(pm.programs[0].entry == 0);
  CHECK(pm.programs[0].end == 1);
}

TEST_CASE("field conventions mirror unused operands") {
  MachineLayout lay{16, 8, 8};
  const std::string text =
      "set 5 2\n"     // a1 = a2 = one_hot(5), dst = r2
      "write 3 2\n"   // a1 = dst = r3 (self-no-op), a2 = r2
      "read 3 4\n"    // a1 = a2 = r3, dst = r4
      "inc 4 6\n"     // a1 = a2 = r4, dst = r6
      "store 7\n"     // a1 = a2 = dst = r7
      "jump 4 0\n"    // a1 = dst = r4, a2 = line 0
      "halt";
  Library lib = link({parse(text, "conv", lay.n)}, lay.n);
  ProgramMatrix pm = compile(lib, lay);

  CHECK(field_is_dirac_at(pm, 0, lay.a1_offset(), 16, 5));
  CHECK(field_is_dirac_at(pm, 0, lay.a2_offset(), 16, 5));
  CHECK(field_is_dirac_at(pm, 0, lay.dst_offset(), 16, 2));

  CHECK(field_is_dirac_at(pm, 1, lay.a1_offset(), 16, 3));
  CHECK(field_is_dirac_at(pm, 1, lay.a2_offset(), 16, 2));
  CHECK(field_is_dirac_at(pm, 1, lay.dst_offset(), 16, 3));

  CHECK(field_is_dirac_at(pm, 2, lay.a1_offset(), 16, 3));
  CHECK(field_is_dirac_at(pm, 2, lay.a2_offset(), 16, 3));
  CHECK(field_is_dirac_at(pm, 2, lay.dst_offset(), 16, 4));

  CHECK(field_is_dirac_at(pm, 4, lay.a1_offset(), 16, 7));
  CHECK(field_is_dirac_at(pm, 4, lay.a2_offset(), 16, 7));
  CHECK(field_is_dirac_at(pm, 4, lay.dst_offset(), 16, 7));

  CHECK(field_is_dirac_at(pm, 5, lay.a1_offset(), 16, 4));
  CHECK(field_is_dirac_at(pm, 5, lay.a2_offset(), 16, 0));
  CHECK(field_is_dirac_at(pm, 5, lay.dst_offset(), 16, 4));
}

TEST_CASE("every field of every compiled corpus row is a dirac distribution") {
  for (const auto& clib : load_manifest()) {
    CAPTURE(clib.name);
    Library lib = link_corpus_library(clib);
    MachineLayout lay{clib.n, clib.registers, clib.mem};
    ProgramMatrix pm = compile(lib, lay);
    REQUIRE(pm.lines() == lib.size());

    const std::size_t w = lay.row_width();
    for (std::size_t i = 0; i < pm.lines(); ++i) {
      for (auto [off, width] :
           {std::pair{lay.opcode_offset(), std::size_t{14}},
            std::pair{lay.a1_offset(), lay.n}, std::pair{lay.a2_offset(), lay.n},
            std::pair{lay.dst_offset(), lay.n}}) {
        double total = 0.0;
        std::size_t ones = 0;
        for (std::size_t k = 0; k < width; ++k) {
          const double v = pm.rho.value()[i * w + off + k];
          REQUIRE((v == 0.0 || v == 1.0));
          total += v;
          ones += v == 1.0 ? 1 : 0;
        }
        REQUIRE(total == 1.0);
        REQUIRE(ones == 1);
      }
    }
  }
}

TEST_CASE("decompile inverts compile over the whole corpus") {
  for (const auto& clib : load_manifest()) {
    CAPTURE(clib.name);
    Library lib = link_corpus_library(clib);
    MachineLayout lay{clib.n, clib.registers, clib.mem};
    ProgramMatrix pm = compile(lib, lay);

    DecompileResult dec = decompile(pm);
    REQUIRE(dec.program.lines == lib.lines);
    CHECK(dec.uncertain_count == 0);
    for (const auto& line : dec.lines) {
      CHECK(line.confidence == 1.0);
      CHECK_FALSE(line.uncertain);
    }
    // entry labels survive as the program's labels
    for (const auto& [name, entry] : lib.entry_points)
      CHECK(dec.program.labels.at(name) == entry);
  }
}

TEST_CASE("compiling twice yields byte-identical artifacts") {
  auto clib = load_manifest().at(0);
  Library lib = link_corpus_library(clib);
  MachineLayout lay{clib.n, clib.registers, clib.mem};
  const std::string once = to_bytes(compile(lib, lay));
  const std::string twice = to_bytes(compile(lib, lay));
  CHECK(once == twice);
  CHECK(once.substr(0, 8) == "DIFCPGM1");
}

TEST_CASE("serialization round-trips exactly") {
  auto clib = load_manifest().at(3);  // the multi-program library
  Library lib = link_corpus_library(clib);
  MachineLayout lay{clib.n, clib.registers, clib.mem};
  ProgramMatrix pm = compile(lib, lay);

  std::stringstream buf(std::ios::in | std::ios::out | std::ios::binary);
  save_program_matrix(pm, buf);
  ProgramMatrix back = load_program_matrix(buf);

  CHECK(back.layout == pm.layout);
  CHECK(back.programs == pm.programs);
  REQUIRE(back.rho.size() == pm.rho.size());
  CHECK(std::memcmp(back.rho.value().data(), pm.rho.value().data(),
                    pm.rho.size() * sizeof(double)) == 0);

  SUBCASE("bad magic is rejected") {
    std::stringstream bad(std::ios::in | std::ios::out | std::ios::binary);
    bad << "NOTAPGM1" << std::string(64, '\0');
    CHECK_THROWS_WITH_AS(load_program_matrix(bad), doctest::Contains("magic"),
                         std::runtime_error);
  }
  SUBCASE("truncation is rejected") {
    std::string bytes = to_bytes(pm);
    bytes.resize(bytes.size() - 9);
    std::stringstream cut(bytes, std::ios::in | std::ios::binary);
    CHECK_THROWS_AS(load_program_matrix(cut), std::runtime_error);
  }
  SUBCASE("non-distribution rows are rejected") {
    std::string bytes = to_bytes(pm);
    // overwrite the final f64 with 0.5: whatever the old value was, the
    // last dst field now sums to 0.5 or 1.5
    const double half = 0.5;
    std::memcpy(bytes.data() + bytes.size() - 8, &half, 8);
    std::stringstream cut(bytes, std::ios::in | std::ios::binary);
    CHECK_THROWS_WITH_AS(load_program_matrix(cut), doctest::Contains("sum"),
                         std::runtime_error);
  }
}

TEST_CASE("compile rejects layout violations") {
  MachineLayout lay{16, 4, 8};
  // register 9 does not exist when the file is compiled for 4 registers
  Library lib = link({parse("copy 9 2\nhalt", "main")}, lay.n);
  CHECK_THROWS_WITH_AS(compile(lib, lay), doctest::Contains("register"),
                       std::invalid_argument);

  // 5 machine lines do not fit a 4-line space
  Library big = link({parse("inc 2 2\ninc 2 2\ninc 2 2\ninc 2 2\nhalt", "main")}, 16);
  MachineLayout tiny{4, 4, 4};
  CHECK_THROWS_WITH_AS(compile(big, tiny), doctest::Contains("line"),
                       std::invalid_argument);
}

TEST_CASE("freeze masks cover exactly the protected spans") {
  auto clib = load_manifest().at(3);  // call_pair: main, double, bump
  Library lib = link_corpus_library(clib);
  MachineLayout lay{clib.n, clib.registers, clib.mem};
  ProgramMatrix pm = compile(lib, lay);
  const std::size_t w = lay.row_width();

  SUBCASE("protect all -> all-zero mask") {
    ParameterMask m = freeze_mask(pm, {protect_all(pm)});
    CHECK(m.all_zero());
    CHECK(m.mask.shape() == pm.rho.shape());
  }
  SUBCASE("protect one program -> zeros exactly over its line range") {
    ParameterMask m = freeze_mask(pm, {protect_program(pm, "double")});
    const ProgramInfo& info = pm.program("double");
    REQUIRE(info.end > info.begin);
    for (std::size_t i = 0; i < pm.lines(); ++i) {
      const bool inside = i >= info.begin && i < info.end;
      for (std::size_t k = 0; k < w; ++k)
        REQUIRE(m.mask.value()[i * w + k] == (inside ? 0.0 : 1.0));
    }
  }
  SUBCASE("protect one field of one line") {
    ParameterMask m = freeze_mask(pm, {ProtectSpan::field_of(3, Field::opcode)});
    std::size_t zeros = 0;
    for (double v : m.mask.value()) zeros += v == 0.0 ? 1 : 0;
    CHECK(zeros == 14);
    for (std::size_t k = 0; k < 14; ++k)
      CHECK(m.mask.value()[3 * w + k] == 0.0);
  }
  SUBCASE("out-of-range span throws") {
    CHECK_THROWS_AS(freeze_mask(pm, {ProtectSpan::rows(0, pm.lines() + 1)}),
                    std::out_of_range);
  }
}

TEST_CASE("a frozen program stays bit-identical through masked updates") {
  auto clib = load_manifest().at(3);
  Library lib = link_corpus_library(clib);
  MachineLayout lay{clib.n, clib.registers, clib.mem};
  ProgramMatrix pm = compile(lib, lay);
  pm.rho.set_requires_grad(true);

  const std::vector<double> before = pm.rho.value();
  ParameterMask m = freeze_mask(pm, {protect_program(pm, "pair_main")});

  // synthetic gradient pulling every entry downward
  pm.rho.node()->grad.assign(pm.rho.size(), 1.0);
  masked_sgd_step(pm.rho, m, 0.05);

  const ProgramInfo& info = pm.program("pair_main");
  const std::size_t w = lay.row_width();
  for (std::size_t i = 0; i < pm.lines(); ++i) {
    for (std::size_t k = 0; k < w; ++k) {
      const double now = pm.rho.value()[i * w + k];
      const double then = before[i * w + k];
      if (i >= info.begin && i < info.end) {
        REQUIRE(std::memcmp(&now, &then, sizeof(double)) == 0);
      } else {
        REQUIRE(now == doctest::Approx(then - 0.05).epsilon(1e-12));
      }
    }
  }
}

TEST_CASE("kappa logits land within 5e-5 of the dirac matrix") {
  auto clib = load_manifest().at(0);
  Library lib = link_corpus_library(clib);
  MachineLayout lay{clib.n, clib.registers, clib.mem};
  ProgramMatrix pm = compile(lib, lay);

  Tensor logits = compile_logits(lib, lay);
  CHECK(logits.requires_grad());
  Tensor soft = program_matrix_from_logits(logits, lay);
  REQUIRE(soft.shape() == pm.rho.shape());

  double max_abs = 0.0;
  for (std::size_t i = 0; i < soft.size(); ++i)
    max_abs = std::max(max_abs, std::abs(soft.value()[i] - pm.rho.value()[i]));
  CHECK(max_abs <= 5e-5);

  // the bridge is differentiable end to end
  Tensor loss = cross_entropy(soft, pm.rho);
  backward(loss);
  const auto& g = logits.grad();
  REQUIRE(g.size() == logits.size());
  double gnorm = 0.0;
  for (double x : g) gnorm += x * x;
  CHECK(std::isfinite(gnorm));
  CHECK(gnorm > 0.0);
}

TEST_CASE("largest-capacity layout compiles and round-trips") {
  // 128 is the dense-table cap; the matrix side has no such cap but must
  // stay consistent at the sizes the experiments use
  MachineLayout lay{32, 13, 8};
  auto clib = load_manifest().at(4);  // iterative sort at n = 32
  Library lib = link_corpus_library(clib);
  ProgramMatrix pm = compile(lib, lay);
  DecompileResult dec = decompile(pm);
  CHECK(dec.program.lines == lib.lines);
}

TEST_CASE("decompile flags low-confidence rows as uncertain") {
  MachineLayout lay{4, 2, 4};
  const std::size_t w = lay.row_width();  // 14 + 12 = 26
  std::vector<double> data(2 * w, 0.0);
  // line 0: clean dirac halt row
  data[0 * w + 0] = 1.0;
  data[0 * w + lay.a1_offset()] = 1.0;
  data[0 * w + lay.a2_offset()] = 1.0;
  data[0 * w + lay.dst_offset()] = 1.0;
  // line 1: uniform opcode field, dirac operands
  for (std::size_t k = 0; k < 14; ++k) data[1 * w + k] = 1.0 / 14;
  data[1 * w + lay.a1_offset() + 1] = 1.0;
  data[1 * w + lay.a2_offset() + 1] = 1.0;
  data[1 * w + lay.dst_offset() + 1] = 1.0;

  ProgramMatrix pm;
  pm.layout = lay;
  pm.rho = Tensor({2, w}, std::move(data));
  pm.programs = {{"main", 0, 0, 2}};

  DecompileResult dec = decompile(pm, 0.5);
  CHECK(dec.lines[0].confidence == 1.0);
  CHECK_FALSE(dec.lines[0].uncertain);
  CHECK(dec.lines[1].confidence == doctest::Approx(1.0 / 14));
  CHECK(dec.lines[1].uncertain);
  CHECK(dec.uncertain_count == 1);
  // ties resolve to the first index: uniform opcode argmax is halt
  CHECK(dec.lines[1].inst.op == Opcode::halt);
}

TEST_CASE("debug json carries argmaxes, confidences and program table") {
  auto clib = load_manifest().at(0);  // fib_once
  Library lib = link_corpus_library(clib);
  MachineLayout lay{clib.n, clib.registers, clib.mem};
  ProgramMatrix pm = compile(lib, lay);

  auto j = nlohmann::json::parse(program_matrix_debug_json(pm));
  CHECK(j["layout"]["n"] == clib.n);
  CHECK(j["programs"].size() == 1);
  CHECK(j["programs"][0]["name"] == "fib_once");
  REQUIRE(j["lines"].size() == lib.size());
  CHECK(j["lines"][0]["fields"]["opcode"]["name"] == "inc");
  for (const auto& line : j["lines"]) {
    CHECK(line["confidence"] == 1.0);
    CHECK(line["uncertain"] == false);
  }
  // the textual form of line 0 is the original first instruction
  CHECK(j["lines"][0]["text"] == "inc r2 r2");
}

TEST_CASE("program lookup by name throws for unknown programs") {
  auto clib = load_manifest().at(0);
  Library lib = link_corpus_library(clib);
  ProgramMatrix pm = compile(lib, MachineLayout{clib.n, clib.registers, clib.mem});
  CHECK_THROWS_AS(pm.program("nope"), std::out_of_range);
}

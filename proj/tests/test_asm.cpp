#include <catch2/catch_amalgamated.hpp>

#include <random>

#include "fan/assembler.hpp"
#include "fan/disasm.hpp"
#include "fan/verifier.hpp"

using namespace fan;

#include "support/generators.hpp"

using fan::testgen::random_valid_program;

TEST_CASE("movi encodes per the opcode table") {
  Bytes b = Assembler::assemble_bytes("movi r0, 7\nexit");
  REQUIRE(b.size() == 16);
  CHECK(b[0] == 0x1B);
  CHECK(b[1] == 0x00);
  CHECK(get_u32(b.data() + 4) == 7);
  CHECK(b[8] == 0x00);
}

TEST_CASE("self-referential label gives offset -1") {
  Program p = assemble("loop: ja loop");
  REQUIRE(p.size() == 1);
  CHECK(p.instructions[0].offset == -1);
}

TEST_CASE("errors carry line numbers") {
  CHECK_THROWS_WITH(assemble("bogus r1"), Catch::Matchers::ContainsSubstring("line 1"));
  CHECK_THROWS_WITH(assemble("movi r0, 1\nmovi r11, 2\nexit"),
                    Catch::Matchers::ContainsSubstring("line 2"));
  CHECK_THROWS_WITH(assemble("ja nowhere"),
                    Catch::Matchers::ContainsSubstring("undefined label"));
  CHECK_THROWS_WITH(assemble("a: exit\na: exit"),
                    Catch::Matchers::ContainsSubstring("duplicate label"));
}

TEST_CASE("comments and hex immediates") {
  Program p = assemble("movi r1, 0x10 ; comment\n  exit ; done");
  CHECK(p.instructions[0].imm == 16);
}

TEST_CASE("assemble(disassemble(p)) is identity on generated programs") {
  std::mt19937_64 rng(2024);
  for (int i = 0; i < 500; ++i) {
    Program p = random_valid_program(rng, 8);
    REQUIRE(verify(p, 8).ok());
    Program back = assemble(disassemble(p));
    REQUIRE(encode_program(back) == encode_program(p));
  }
}

TEST_CASE("label jumps survive the round trip byte-for-byte") {
  Program p = assemble(
      "start: movi r1, 3\n"
      "loop: subi r1, 1\n"
      "jgti r1, 0, loop\n"
      "jeqi r1, 0, start\n"
      "exit");
  CHECK(encode_program(assemble(disassemble(p))) == encode_program(p));
}

#include <random>

#include "doctest.h"
#include "wolly/core_model.hpp"

using namespace wolly;

TEST_SUITE("core_model") {

TEST_CASE("parse_instruction maps the six tokens") {
    CHECK(parse_instruction("FORWARD") == Instruction::forward());
    CHECK(parse_instruction("RIGHT") == Instruction::right());
    CHECK(parse_instruction("LEFT") == Instruction::left());
    CHECK(parse_instruction("BACKWARD") == Instruction::backward());
    CHECK(parse_instruction("STOP") == Instruction::stop());
    CHECK(parse_instruction("EXPRESSION happy") == Instruction::make_expression(ExpressionId("happy")));
}

TEST_CASE("parse_instruction errors") {
    try {
        parse_instruction("JUMP", 7);
        FAIL("expected ParseError");
    } catch (const ParseError& e) {
        CHECK(e.line == 7);
        CHECK(e.reason.find("unknown token") != std::string::npos);
    }
    CHECK_THROWS_AS(parse_instruction("EXPRESSION rage"), ParseError);
    CHECK_THROWS_AS(parse_instruction("EXPRESSION"), ParseError);
    CHECK_THROWS_AS(parse_instruction("FORWARD "), ParseError);
    CHECK_THROWS_AS(parse_instruction("forward"), ParseError);
    CHECK_THROWS_AS(parse_instruction("FORWARD\nLEFT"), ParseError);
}

TEST_CASE("serialize_instruction") {
    CHECK(serialize_instruction(Instruction::left()) == "LEFT");
    CHECK(serialize_instruction(Instruction::make_expression(ExpressionId("sad"))) == "EXPRESSION sad");
    CHECK(serialize_instruction(Instruction::stop()) == "STOP");
}

TEST_CASE("round trip over every valid instruction") {
    std::vector<Instruction> all = {Instruction::forward(), Instruction::right(), Instruction::left(),
                                    Instruction::backward(), Instruction::stop()};
    for (const auto& n : ExpressionSet::defaults().names()) all.push_back(Instruction::make_expression(ExpressionId(n)));
    for (const auto& i : all) CHECK(parse_instruction(serialize_instruction(i)) == i);
}

TEST_CASE("expression universe has exactly eleven members") {
    const auto& names = ExpressionSet::defaults().names();
    CHECK(names.size() == 11);
    auto twelve = names;
    twelve.push_back("bored");
    CHECK_THROWS_AS(ExpressionSet{twelve}, std::invalid_argument);
    auto dup = names;
    dup.back() = dup.front();
    CHECK_THROWS_AS(ExpressionSet{dup}, std::invalid_argument);
    auto upper = names;
    upper[0] = "Happy";
    CHECK_THROWS_AS(ExpressionSet{upper}, std::invalid_argument);
}

TEST_CASE("expression list loads from configuration") {
    auto set = ExpressionSet::load(WOLLY_DATA_DIR "/expressions.txt");
    CHECK(set.names() == ExpressionSet::defaults().names());
}

TEST_CASE("make_expression needs a payload") {
    CHECK_THROWS_AS(Instruction::of(InstructionKind::MakeExpression), std::invalid_argument);
    CHECK_FALSE(Instruction::of(InstructionKind::Stop).expression().has_value());
}

TEST_CASE("validate_program") {
    Program empty;
    CHECK_NOTHROW(validate_program(empty));

    Program cap;
    cap.instructions.assign(kMaxProgramLen, Instruction::forward());
    CHECK_NOTHROW(validate_program(cap));
    cap.instructions.push_back(Instruction::forward());
    try {
        validate_program(cap);
        FAIL("expected ValidationError");
    } catch (const ValidationError& e) {
        CHECK(e.reason.find("too long") != std::string::npos);
    }

    Program rage;
    rage.instructions.push_back(Instruction::make_expression(ExpressionId("rage")));
    try {
        validate_program(rage);
        FAIL("expected ValidationError");
    } catch (const ValidationError& e) {
        CHECK(e.index == 0);
    }
}

TEST_CASE("parse_script") {
    CHECK(parse_script("").empty());
    CHECK(parse_script("FORWARD\nLEFT\n") == std::vector{Instruction::forward(), Instruction::left()});
    CHECK(parse_script("FORWARD\nLEFT") == std::vector{Instruction::forward(), Instruction::left()});
    try {
        parse_script("FORWARD\n\nLEFT\n");
        FAIL("expected ParseError");
    } catch (const ParseError& e) {
        CHECK(e.line == 2);
    }
}

TEST_CASE("heading normalization is periodic") {
    CHECK(normalize_heading(0) == 0);
    CHECK(normalize_heading(360) == 0);
    CHECK(normalize_heading(-90) == 270);
    CHECK(normalize_heading(450) == 90);
    CHECK(normalize_heading(-1e-300) < 360.0);
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> h(-720, 720);
    std::uniform_int_distribution<int> k(-50, 50);
    for (int i = 0; i < 2000; ++i) {
        double a = h(rng);
        double n = normalize_heading(a + 360.0 * k(rng));
        double m = normalize_heading(a);
        CHECK(n >= 0.0);
        CHECK(n < 360.0);
        double diff = std::abs(n - m);
        CHECK(std::min(diff, 360.0 - diff) < 1e-9);
    }
}

}

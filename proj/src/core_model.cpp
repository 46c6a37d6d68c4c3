#include "wolly/core_model.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>

namespace wolly {

namespace {

bool is_identifier(std::string_view s) {
    if (s.empty()) return false;
    return std::all_of(s.begin(), s.end(), [](char c) {
        return (c >= 'a' && c <= 'z') || (c >= '0' && c <= '9') || c == '_';
    });
}

std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
    return s;
}

}  // namespace

ExpressionSet::ExpressionSet(std::vector<std::string> names) : names_(std::move(names)) {
    if (names_.size() != kExpressionCount) {
        throw std::invalid_argument("expression set must have exactly 11 names, got " +
                                    std::to_string(names_.size()));
    }
    std::set<std::string> seen;
    for (const auto& n : names_) {
        if (!is_identifier(n)) throw std::invalid_argument("expression name not a lowercase identifier: " + n);
        if (!seen.insert(n).second) throw std::invalid_argument("duplicate expression name: " + n);
    }
}

const ExpressionSet& ExpressionSet::defaults() {
    static const ExpressionSet set({"happy", "sad", "angry", "surprised", "afraid", "disgusted", "neutral",
                                    "love", "sleepy", "confused", "laughing"});
    return set;
}

ExpressionSet ExpressionSet::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open expression list " + path);
    std::vector<std::string> names;
    std::string line;
    while (std::getline(in, line)) {
        auto t = trim(line);
        if (t.empty() || t.front() == '#') continue;
        names.emplace_back(t);
    }
    return ExpressionSet(std::move(names));
}

bool ExpressionSet::contains(std::string_view name) const noexcept {
    return std::find(names_.begin(), names_.end(), name) != names_.end();
}

std::string_view to_string(InstructionKind kind) noexcept {
    switch (kind) {
        case InstructionKind::MoveForward: return "FORWARD";
        case InstructionKind::MoveRight: return "RIGHT";
        case InstructionKind::MoveLeft: return "LEFT";
        case InstructionKind::MoveBackward: return "BACKWARD";
        case InstructionKind::Stop: return "STOP";
        case InstructionKind::MakeExpression: return "EXPRESSION";
    }
    return "?";
}

Instruction Instruction::of(InstructionKind kind) {
    if (kind == InstructionKind::MakeExpression) {
        throw std::invalid_argument("MakeExpression requires an expression");
    }
    return Instruction(kind);
}

ParseError::ParseError(std::size_t l, std::string r)
    : std::runtime_error("line " + std::to_string(l) + ": " + r), line(l), reason(std::move(r)) {}

ValidationError::ValidationError(std::size_t i, std::string r)
    : std::runtime_error("instruction " + std::to_string(i) + ": " + r), index(i), reason(std::move(r)) {}

Instruction parse_instruction(std::string_view text, std::size_t line, const ExpressionSet& expressions) {
    if (text.find('\n') != std::string_view::npos) throw ParseError(line, "not a single line");
    if (text == "FORWARD") return Instruction::forward();
    if (text == "RIGHT") return Instruction::right();
    if (text == "LEFT") return Instruction::left();
    if (text == "BACKWARD") return Instruction::backward();
    if (text == "STOP") return Instruction::stop();
    constexpr std::string_view kExpr = "EXPRESSION ";
    if (text.starts_with(kExpr)) {
        auto name = text.substr(kExpr.size());
        if (!expressions.contains(name)) throw ParseError(line, "unknown expression '" + std::string(name) + "'");
        return Instruction::make_expression(ExpressionId(std::string(name)));
    }
    throw ParseError(line, "unknown token '" + std::string(text) + "'");
}

std::string serialize_instruction(const Instruction& instr) {
    std::string out(to_string(instr.kind()));
    if (instr.kind() == InstructionKind::MakeExpression) {
        out += ' ';
        out += instr.expression()->name();
    }
    return out;
}

std::vector<Instruction> parse_script(std::string_view text, const ExpressionSet& expressions) {
    std::vector<Instruction> out;
    std::size_t line_no = 1;
    while (!text.empty()) {
        auto nl = text.find('\n');
        auto line = text.substr(0, nl);
        out.push_back(parse_instruction(line, line_no, expressions));
        if (nl == std::string_view::npos) break;
        text.remove_prefix(nl + 1);
        ++line_no;
    }
    return out;
}

void validate_program(const Program& p, const ExpressionSet& expressions, std::size_t max_len) {
    if (p.instructions.size() > max_len) {
        throw ValidationError(max_len, "too long: " + std::to_string(p.instructions.size()) +
                                           " instructions exceeds cap " + std::to_string(max_len));
    }
    for (std::size_t i = 0; i < p.instructions.size(); ++i) {
        const auto& in = p.instructions[i];
        if (in.kind() == InstructionKind::MakeExpression) {
            if (!in.expression() || !expressions.contains(in.expression()->name())) {
                throw ValidationError(i, "unknown expression '" +
                                             (in.expression() ? in.expression()->name() : std::string()) + "'");
            }
        }
    }
}

double normalize_heading(double degrees) noexcept {
    double h = std::fmod(degrees, 360.0);
    if (h < 0.0) h += 360.0;
    // fmod of a tiny negative can round up to exactly 360
    if (h >= 360.0) h -= 360.0;
    return h;
}

}  // namespace wolly

#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace wolly {

inline constexpr std::size_t kMaxProgramLen = 10'000;
inline constexpr std::size_t kExpressionCount = 11;

/// Name of one of the robot's facial expressions. Validity is decided by an
/// ExpressionSet, not by the type itself.
class ExpressionId {
public:
    ExpressionId() = default;
    explicit ExpressionId(std::string name) : name_(std::move(name)) {}

    const std::string& name() const noexcept { return name_; }

    friend bool operator==(const ExpressionId&, const ExpressionId&) = default;
    friend auto operator<=>(const ExpressionId&, const ExpressionId&) = default;

private:
    std::string name_;
};

/// The closed universe of expression names. Exactly eleven unique lowercase
/// identifiers; the constructor throws std::invalid_argument otherwise.
class ExpressionSet {
public:
    explicit ExpressionSet(std::vector<std::string> names);

    /// happy, sad, angry, surprised, afraid, disgusted, neutral, love, sleepy,
    /// confused, laughing.
    static const ExpressionSet& defaults();

    /// One name per line; blank lines and '#' comments ignored.
    static ExpressionSet load(const std::string& path);

    bool contains(std::string_view name) const noexcept;
    const std::vector<std::string>& names() const noexcept { return names_; }

private:
    std::vector<std::string> names_;
};

enum class InstructionKind { MoveForward, MoveRight, MoveLeft, MoveBackward, Stop, MakeExpression };

std::string_view to_string(InstructionKind kind) noexcept;

class Instruction {
public:
    static Instruction forward() { return Instruction(InstructionKind::MoveForward); }
    static Instruction right() { return Instruction(InstructionKind::MoveRight); }
    static Instruction left() { return Instruction(InstructionKind::MoveLeft); }
    static Instruction backward() { return Instruction(InstructionKind::MoveBackward); }
    static Instruction stop() { return Instruction(InstructionKind::Stop); }
    static Instruction make_expression(ExpressionId e) {
        return Instruction(InstructionKind::MakeExpression, std::move(e));
    }
    /// Payload-free kinds only; throws std::invalid_argument for MakeExpression.
    static Instruction of(InstructionKind kind);

    InstructionKind kind() const noexcept { return kind_; }
    /// Present iff kind() == MakeExpression.
    const std::optional<ExpressionId>& expression() const noexcept { return expression_; }

    friend bool operator==(const Instruction&, const Instruction&) = default;

private:
    explicit Instruction(InstructionKind k, std::optional<ExpressionId> e = std::nullopt)
        : kind_(k), expression_(std::move(e)) {}

    InstructionKind kind_;
    std::optional<ExpressionId> expression_;
};

struct Program {
    std::string id;
    std::string author;
    std::vector<Instruction> instructions;

    std::size_t size() const noexcept { return instructions.size(); }
};

struct ParseError : std::runtime_error {
    ParseError(std::size_t line, std::string reason);
    std::size_t line;
    std::string reason;
};

struct ValidationError : std::runtime_error {
    ValidationError(std::size_t index, std::string reason);
    std::size_t index;
    std::string reason;
};

/// Parses one canonical script token: FORWARD, RIGHT, LEFT, BACKWARD, STOP or
/// "EXPRESSION <name>". `line` is only used to label errors.
Instruction parse_instruction(std::string_view text, std::size_t line = 1,
                              const ExpressionSet& expressions = ExpressionSet::defaults());

std::string serialize_instruction(const Instruction& instr);

/// Parses a whole newline-separated script. A trailing newline is optional;
/// empty lines are rejected except for the final terminator.
std::vector<Instruction> parse_script(std::string_view text,
                                      const ExpressionSet& expressions = ExpressionSet::defaults());

/// Throws ValidationError on the first offending instruction. A program longer
/// than max_len reports index == max_len.
void validate_program(const Program& p, const ExpressionSet& expressions = ExpressionSet::defaults(),
                      std::size_t max_len = kMaxProgramLen);

/// Maps any finite angle in degrees to [0, 360).
double normalize_heading(double degrees) noexcept;

struct RobotPose {
    double x = 0.0;
    double y = 0.0;
    double heading = 0.0;

    friend bool operator==(const RobotPose&, const RobotPose&) = default;
};

enum class Phase { Idle, Executing };

struct RobotState {
    RobotPose pose;
    ExpressionId expression{"neutral"};
    Phase phase = Phase::Idle;
    std::size_t seq = 0;  // meaningful only while Executing

    friend bool operator==(const RobotState&, const RobotState&) = default;
};

}  // namespace wolly

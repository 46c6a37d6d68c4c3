#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "wolly/core_model.hpp"

namespace wolly::blocks {

struct IntExpr;
struct BoolExpr;
using IntExprPtr = std::shared_ptr<const IntExpr>;
using BoolExprPtr = std::shared_ptr<const BoolExpr>;

/// Signed 64-bit integer expression. Overflow is a compile error, never UB.
struct IntExpr {
    enum class Op { Literal, Var, Add, Subtract, Multiply };
    Op op = Op::Literal;
    std::int64_t value = 0;  // Literal
    std::string var;         // Var
    IntExprPtr lhs, rhs;     // binary ops

    static IntExprPtr literal(std::int64_t v);
    static IntExprPtr variable(std::string name);
    static IntExprPtr binary(Op op, IntExprPtr lhs, IntExprPtr rhs);
};

/// `and` / `or` short-circuit left to right; `not` uses lhs only.
struct BoolExpr {
    enum class Op { Less, Equal, Greater, And, Or, Not };
    Op op = Op::Less;
    IntExprPtr left, right;  // comparisons
    BoolExprPtr lhs, rhs;    // logical ops

    static BoolExprPtr compare(Op op, IntExprPtr l, IntExprPtr r);
    static BoolExprPtr logical(Op op, BoolExprPtr l, BoolExprPtr r = nullptr);
};

enum class BlockKind {
    MoveForward, MoveRight, MoveLeft, MoveBackward, Stop, MakeExpression, Repeat, If, SetVar, Sequence
};

std::string_view to_string(BlockKind kind) noexcept;

struct BlockNode {
    BlockKind kind = BlockKind::Sequence;
    std::optional<ExpressionId> expression;  // MakeExpression
    IntExprPtr count;                        // Repeat
    BoolExprPtr cond;                        // If
    std::vector<BlockNode> body;             // Repeat, Sequence
    std::vector<BlockNode> then_branch;      // If
    std::vector<BlockNode> else_branch;      // If
    std::string var;                         // SetVar
    IntExprPtr value;                        // SetVar

    static BlockNode action(BlockKind kind);
    static BlockNode make_expression(std::string name);
    static BlockNode repeat(IntExprPtr count, std::vector<BlockNode> body);
    static BlockNode if_else(BoolExprPtr cond, std::vector<BlockNode> then_branch,
                             std::vector<BlockNode> else_branch = {});
    static BlockNode set_var(std::string name, IntExprPtr value);
    static BlockNode sequence(std::vector<BlockNode> body);
};

struct CompileLimits {
    std::size_t max_instructions = kMaxProgramLen;
    std::int64_t max_repeat = 1'000;
};

struct BlockParseError : std::runtime_error {
    BlockParseError(std::string path, std::string reason);
    std::string path;
    std::string reason;
};

enum class CompileErrorKind { TooManyInstructions, UndefinedVariable, RepeatBound, Overflow };

std::string_view to_string(CompileErrorKind kind) noexcept;

struct CompileError : std::runtime_error {
    CompileError(CompileErrorKind kind, std::string detail);
    CompileErrorKind kind;
    std::string detail;  // variable name, offending count, ...
};

/// Parses a JSON block-tree document (see docs/block_format.md).
BlockNode parse_blocks(std::string_view source, const ExpressionSet& expressions = ExpressionSet::defaults());

/// Inverse of parse_blocks: compact JSON text.
std::string to_document(const BlockNode& root);

/// Lowers the tree to a stack-machine program and runs it to a flat trace.
Program compile(const BlockNode& root, const CompileLimits& limits = {});

/// Direct recursive evaluation of the tree. Same contract as compile; kept as
/// the independent route for equivalence checks.
Program interpret(const BlockNode& root, const CompileLimits& limits = {});

/// Canonical script text, one instruction per line, each newline-terminated.
std::string emit_script(const Program& p);

}  // namespace wolly::blocks

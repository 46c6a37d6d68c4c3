#include "wolly/block_compiler.hpp"

#include <cctype>
#include <map>
#include <set>
#include <unordered_map>

#include "json.hpp"

namespace wolly::blocks {

using nlohmann::json;

IntExprPtr IntExpr::literal(std::int64_t v) {
    auto e = std::make_shared<IntExpr>();
    e->op = Op::Literal;
    e->value = v;
    return e;
}

IntExprPtr IntExpr::variable(std::string name) {
    auto e = std::make_shared<IntExpr>();
    e->op = Op::Var;
    e->var = std::move(name);
    return e;
}

IntExprPtr IntExpr::binary(Op op, IntExprPtr lhs, IntExprPtr rhs) {
    auto e = std::make_shared<IntExpr>();
    e->op = op;
    e->lhs = std::move(lhs);
    e->rhs = std::move(rhs);
    return e;
}

BoolExprPtr BoolExpr::compare(Op op, IntExprPtr l, IntExprPtr r) {
    auto e = std::make_shared<BoolExpr>();
    e->op = op;
    e->left = std::move(l);
    e->right = std::move(r);
    return e;
}

BoolExprPtr BoolExpr::logical(Op op, BoolExprPtr l, BoolExprPtr r) {
    auto e = std::make_shared<BoolExpr>();
    e->op = op;
    e->lhs = std::move(l);
    e->rhs = std::move(r);
    return e;
}

BlockNode BlockNode::action(BlockKind kind) {
    BlockNode n;
    n.kind = kind;
    return n;
}

BlockNode BlockNode::make_expression(std::string name) {
    BlockNode n;
    n.kind = BlockKind::MakeExpression;
    n.expression = ExpressionId(std::move(name));
    return n;
}

BlockNode BlockNode::repeat(IntExprPtr count, std::vector<BlockNode> body) {
    BlockNode n;
    n.kind = BlockKind::Repeat;
    n.count = std::move(count);
    n.body = std::move(body);
    return n;
}

BlockNode BlockNode::if_else(BoolExprPtr cond, std::vector<BlockNode> then_branch,
                             std::vector<BlockNode> else_branch) {
    BlockNode n;
    n.kind = BlockKind::If;
    n.cond = std::move(cond);
    n.then_branch = std::move(then_branch);
    n.else_branch = std::move(else_branch);
    return n;
}

BlockNode BlockNode::set_var(std::string name, IntExprPtr value) {
    BlockNode n;
    n.kind = BlockKind::SetVar;
    n.var = std::move(name);
    n.value = std::move(value);
    return n;
}

BlockNode BlockNode::sequence(std::vector<BlockNode> body) {
    BlockNode n;
    n.kind = BlockKind::Sequence;
    n.body = std::move(body);
    return n;
}

std::string_view to_string(BlockKind kind) noexcept {
    switch (kind) {
        case BlockKind::MoveForward: return "move_forward";
        case BlockKind::MoveRight: return "move_right";
        case BlockKind::MoveLeft: return "move_left";
        case BlockKind::MoveBackward: return "move_backward";
        case BlockKind::Stop: return "stop";
        case BlockKind::MakeExpression: return "make_expression";
        case BlockKind::Repeat: return "repeat";
        case BlockKind::If: return "if";
        case BlockKind::SetVar: return "set_var";
        case BlockKind::Sequence: return "sequence";
    }
    return "?";
}

std::string_view to_string(CompileErrorKind kind) noexcept {
    switch (kind) {
        case CompileErrorKind::TooManyInstructions: return "TooManyInstructions";
        case CompileErrorKind::UndefinedVariable: return "UndefinedVariable";
        case CompileErrorKind::RepeatBound: return "RepeatBound";
        case CompileErrorKind::Overflow: return "Overflow";
    }
    return "?";
}

BlockParseError::BlockParseError(std::string p, std::string r)
    : std::runtime_error(p + ": " + r), path(std::move(p)), reason(std::move(r)) {}

CompileError::CompileError(CompileErrorKind k, std::string d)
    : std::runtime_error(std::string(to_string(k)) + (d.empty() ? "" : ": " + d)), kind(k), detail(std::move(d)) {}

// ---------------------------------------------------------------------------
// Document parsing

namespace {

constexpr int kMaxDepth = 200;

const std::map<std::string, BlockKind, std::less<>> kKindNames = {
    {"move_forward", BlockKind::MoveForward}, {"move_right", BlockKind::MoveRight},
    {"move_left", BlockKind::MoveLeft},       {"move_backward", BlockKind::MoveBackward},
    {"stop", BlockKind::Stop},                {"make_expression", BlockKind::MakeExpression},
    {"repeat", BlockKind::Repeat},            {"if", BlockKind::If},
    {"set_var", BlockKind::SetVar},           {"sequence", BlockKind::Sequence},
};

bool valid_var_name(const std::string& s) {
    if (s.empty() || !(std::isalpha(static_cast<unsigned char>(s[0])) || s[0] == '_')) return false;
    for (char c : s) {
        if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '_')) return false;
    }
    return true;
}

class DocParser {
public:
    explicit DocParser(const ExpressionSet& expressions) : expressions_(expressions) {}

    BlockNode block(const json& j, const std::string& path, int depth) {
        check_depth(path, depth);
        if (!j.is_object()) throw BlockParseError(path, "block must be an object");
        auto kind_it = j.find("kind");
        if (kind_it == j.end() || !kind_it->is_string()) throw BlockParseError(path, "missing string field 'kind'");
        const auto& kind_name = kind_it->get_ref<const std::string&>();
        auto k = kKindNames.find(kind_name);
        if (k == kKindNames.end()) throw BlockParseError(path, "unknown block kind '" + kind_name + "'");

        BlockNode n;
        n.kind = k->second;
        switch (n.kind) {
            case BlockKind::MoveForward:
            case BlockKind::MoveRight:
            case BlockKind::MoveLeft:
            case BlockKind::MoveBackward:
            case BlockKind::Stop:
                only_fields(j, path, {"kind"});
                break;
            case BlockKind::MakeExpression: {
                only_fields(j, path, {"kind", "expression"});
                const auto& e = require(j, path, "expression");
                if (!e.is_string()) throw BlockParseError(path + ".expression", "must be a string");
                auto name = e.get<std::string>();
                if (!expressions_.contains(name)) {
                    throw BlockParseError(path + ".expression", "unknown expression '" + name + "'");
                }
                n.expression = ExpressionId(name);
                break;
            }
            case BlockKind::Repeat:
                only_fields(j, path, {"kind", "count", "body"});
                n.count = int_expr(require(j, path, "count"), path + ".count", depth + 1);
                n.body = block_list(require(j, path, "body"), path + ".body", depth + 1);
                break;
            case BlockKind::If:
                only_fields(j, path, {"kind", "cond", "then", "else"});
                n.cond = bool_expr(require(j, path, "cond"), path + ".cond", depth + 1);
                n.then_branch = block_list(require(j, path, "then"), path + ".then", depth + 1);
                if (j.contains("else")) n.else_branch = block_list(j.at("else"), path + ".else", depth + 1);
                break;
            case BlockKind::SetVar: {
                only_fields(j, path, {"kind", "name", "value"});
                const auto& name = require(j, path, "name");
                if (!name.is_string() || !valid_var_name(name.get<std::string>())) {
                    throw BlockParseError(path + ".name", "must be an identifier string");
                }
                n.var = name.get<std::string>();
                n.value = int_expr(require(j, path, "value"), path + ".value", depth + 1);
                break;
            }
            case BlockKind::Sequence:
                only_fields(j, path, {"kind", "body"});
                n.body = block_list(require(j, path, "body"), path + ".body", depth + 1);
                break;
        }
        return n;
    }

private:
    static void check_depth(const std::string& path, int depth) {
        if (depth > kMaxDepth) throw BlockParseError(path, "nesting too deep");
    }

    static const json& require(const json& j, const std::string& path, const char* field) {
        auto it = j.find(field);
        if (it == j.end()) throw BlockParseError(path, std::string("missing field '") + field + "'");
        return *it;
    }

    static void only_fields(const json& j, const std::string& path, std::initializer_list<std::string_view> allowed) {
        for (const auto& [key, _] : j.items()) {
            bool ok = false;
            for (auto a : allowed) ok = ok || key == a;
            if (!ok) throw BlockParseError(path, "unexpected field '" + key + "'");
        }
    }

    std::vector<BlockNode> block_list(const json& j, const std::string& path, int depth) {
        check_depth(path, depth);
        if (!j.is_array()) throw BlockParseError(path, "must be an array of blocks");
        std::vector<BlockNode> out;
        out.reserve(j.size());
        for (std::size_t i = 0; i < j.size(); ++i) {
            out.push_back(block(j[i], path + "[" + std::to_string(i) + "]", depth + 1));
        }
        return out;
    }

    IntExprPtr int_expr(const json& j, const std::string& path, int depth) {
        check_depth(path, depth);
        if (j.is_number_integer()) return IntExpr::literal(j.get<std::int64_t>());
        if (j.is_number_unsigned()) throw BlockParseError(path, "integer literal out of 64-bit signed range");
        if (!j.is_object()) throw BlockParseError(path, "integer expression must be an integer or an object");
        if (j.contains("var")) {
            only_fields(j, path, {"var"});
            const auto& v = j.at("var");
            if (!v.is_string() || !valid_var_name(v.get<std::string>())) {
                throw BlockParseError(path + ".var", "must be an identifier string");
            }
            return IntExpr::variable(v.get<std::string>());
        }
        const auto& op = require(j, path, "op");
        if (!op.is_string()) throw BlockParseError(path + ".op", "must be a string");
        only_fields(j, path, {"op", "lhs", "rhs"});
        const auto& name = op.get_ref<const std::string&>();
        IntExpr::Op o;
        if (name == "add") o = IntExpr::Op::Add;
        else if (name == "subtract") o = IntExpr::Op::Subtract;
        else if (name == "multiply") o = IntExpr::Op::Multiply;
        else throw BlockParseError(path + ".op", "unknown integer operator '" + name + "'");
        return IntExpr::binary(o, int_expr(require(j, path, "lhs"), path + ".lhs", depth + 1),
                               int_expr(require(j, path, "rhs"), path + ".rhs", depth + 1));
    }

    BoolExprPtr bool_expr(const json& j, const std::string& path, int depth) {
        check_depth(path, depth);
        if (!j.is_object()) throw BlockParseError(path, "condition must be an object");
        const auto& op = require(j, path, "op");
        if (!op.is_string()) throw BlockParseError(path + ".op", "must be a string");
        const auto& name = op.get_ref<const std::string&>();
        if (name == "<" || name == "=" || name == ">") {
            only_fields(j, path, {"op", "lhs", "rhs"});
            auto o = name == "<" ? BoolExpr::Op::Less : name == "=" ? BoolExpr::Op::Equal : BoolExpr::Op::Greater;
            return BoolExpr::compare(o, int_expr(require(j, path, "lhs"), path + ".lhs", depth + 1),
                                     int_expr(require(j, path, "rhs"), path + ".rhs", depth + 1));
        }
        if (name == "and" || name == "or") {
            only_fields(j, path, {"op", "lhs", "rhs"});
            return BoolExpr::logical(name == "and" ? BoolExpr::Op::And : BoolExpr::Op::Or,
                                     bool_expr(require(j, path, "lhs"), path + ".lhs", depth + 1),
                                     bool_expr(require(j, path, "rhs"), path + ".rhs", depth + 1));
        }
        if (name == "not") {
            only_fields(j, path, {"op", "arg"});
            return BoolExpr::logical(BoolExpr::Op::Not, bool_expr(require(j, path, "arg"), path + ".arg", depth + 1));
        }
        throw BlockParseError(path + ".op", "unknown condition operator '" + name + "'");
    }

    const ExpressionSet& expressions_;
};

json int_to_json(const IntExpr& e) {
    switch (e.op) {
        case IntExpr::Op::Literal: return e.value;
        case IntExpr::Op::Var: return json{{"var", e.var}};
        case IntExpr::Op::Add: return json{{"op", "add"}, {"lhs", int_to_json(*e.lhs)}, {"rhs", int_to_json(*e.rhs)}};
        case IntExpr::Op::Subtract:
            return json{{"op", "subtract"}, {"lhs", int_to_json(*e.lhs)}, {"rhs", int_to_json(*e.rhs)}};
        case IntExpr::Op::Multiply:
            return json{{"op", "multiply"}, {"lhs", int_to_json(*e.lhs)}, {"rhs", int_to_json(*e.rhs)}};
    }
    return nullptr;
}

json bool_to_json(const BoolExpr& e) {
    switch (e.op) {
        case BoolExpr::Op::Less: return json{{"op", "<"}, {"lhs", int_to_json(*e.left)}, {"rhs", int_to_json(*e.right)}};
        case BoolExpr::Op::Equal: return json{{"op", "="}, {"lhs", int_to_json(*e.left)}, {"rhs", int_to_json(*e.right)}};
        case BoolExpr::Op::Greater:
            return json{{"op", ">"}, {"lhs", int_to_json(*e.left)}, {"rhs", int_to_json(*e.right)}};
        case BoolExpr::Op::And: return json{{"op", "and"}, {"lhs", bool_to_json(*e.lhs)}, {"rhs", bool_to_json(*e.rhs)}};
        case BoolExpr::Op::Or: return json{{"op", "or"}, {"lhs", bool_to_json(*e.lhs)}, {"rhs", bool_to_json(*e.rhs)}};
        case BoolExpr::Op::Not: return json{{"op", "not"}, {"arg", bool_to_json(*e.lhs)}};
    }
    return nullptr;
}

json block_to_json(const BlockNode& n);

json list_to_json(const std::vector<BlockNode>& list) {
    json arr = json::array();
    for (const auto& b : list) arr.push_back(block_to_json(b));
    return arr;
}

json block_to_json(const BlockNode& n) {
    json j = {{"kind", to_string(n.kind)}};
    switch (n.kind) {
        case BlockKind::MakeExpression: j["expression"] = n.expression->name(); break;
        case BlockKind::Repeat:
            j["count"] = int_to_json(*n.count);
            j["body"] = list_to_json(n.body);
            break;
        case BlockKind::If:
            j["cond"] = bool_to_json(*n.cond);
            j["then"] = list_to_json(n.then_branch);
            if (!n.else_branch.empty()) j["else"] = list_to_json(n.else_branch);
            break;
        case BlockKind::SetVar:
            j["name"] = n.var;
            j["value"] = int_to_json(*n.value);
            break;
        case BlockKind::Sequence: j["body"] = list_to_json(n.body); break;
        default: break;
    }
    return j;
}

std::optional<Instruction> action_instruction(const BlockNode& n) {
    switch (n.kind) {
        case BlockKind::MoveForward: return Instruction::forward();
        case BlockKind::MoveRight: return Instruction::right();
        case BlockKind::MoveLeft: return Instruction::left();
        case BlockKind::MoveBackward: return Instruction::backward();
        case BlockKind::Stop: return Instruction::stop();
        case BlockKind::MakeExpression: return Instruction::make_expression(*n.expression);
        default: return std::nullopt;
    }
}

std::int64_t checked(CompileErrorKind kind_on_overflow, bool overflowed, std::int64_t v) {
    if (overflowed) throw CompileError(kind_on_overflow, "64-bit signed arithmetic overflow");
    return v;
}

std::int64_t arith(IntExpr::Op op, std::int64_t a, std::int64_t b) {
    std::int64_t r = 0;
    bool of = false;
    switch (op) {
        case IntExpr::Op::Add: of = __builtin_add_overflow(a, b, &r); break;
        case IntExpr::Op::Subtract: of = __builtin_sub_overflow(a, b, &r); break;
        case IntExpr::Op::Multiply: of = __builtin_mul_overflow(a, b, &r); break;
        default: break;
    }
    return checked(CompileErrorKind::Overflow, of, r);
}

void check_repeat(std::int64_t count, const CompileLimits& limits) {
    if (count < 0 || count > limits.max_repeat) {
        throw CompileError(CompileErrorKind::RepeatBound,
                           "count " + std::to_string(count) + " outside [0, " + std::to_string(limits.max_repeat) + "]");
    }
}

[[noreturn]] void too_many(const CompileLimits& limits) {
    throw CompileError(CompileErrorKind::TooManyInstructions,
                       "trace exceeds " + std::to_string(limits.max_instructions) + " instructions");
}

// ---------------------------------------------------------------------------
// Compile route: lower to a stack machine, then run it.

enum class OpCode {
    Emit,         // arg = instruction index
    PushConst,    // imm
    PushVar,      // arg = slot
    Store,        // arg = slot; pops
    Add, Sub, Mul,
    Less, Equal, Greater, Not,
    JumpIfZeroKeep,     // arg = target; peeks
    JumpIfNonZeroKeep,  // arg = target; peeks
    JumpIfZero,         // arg = target; pops
    Jump,               // arg = target
    Pop,
    LoopEnter,    // pops count, pushes onto loop stack
    LoopNext,     // arg = exit target; decrements or pops loop and exits
};

struct Op {
    OpCode code;
    std::size_t arg = 0;
    std::int64_t imm = 0;
};

struct Bytecode {
    std::vector<Op> ops;
    std::vector<Instruction> actions;
    std::vector<std::string> slot_names;
};

class Lowering {
public:
    Bytecode run(const BlockNode& root) {
        block(root);
        return std::move(code_);
    }

private:
    std::size_t emit(OpCode c, std::size_t arg = 0, std::int64_t imm = 0) {
        code_.ops.push_back({c, arg, imm});
        return code_.ops.size() - 1;
    }

    std::size_t slot(const std::string& name) {
        auto [it, inserted] = slots_.try_emplace(name, code_.slot_names.size());
        if (inserted) code_.slot_names.push_back(name);
        return it->second;
    }

    void int_expr(const IntExpr& e) {
        switch (e.op) {
            case IntExpr::Op::Literal: emit(OpCode::PushConst, 0, e.value); break;
            case IntExpr::Op::Var: emit(OpCode::PushVar, slot(e.var)); break;
            case IntExpr::Op::Add:
            case IntExpr::Op::Subtract:
            case IntExpr::Op::Multiply:
                int_expr(*e.lhs);
                int_expr(*e.rhs);
                emit(e.op == IntExpr::Op::Add ? OpCode::Add : e.op == IntExpr::Op::Subtract ? OpCode::Sub : OpCode::Mul);
                break;
        }
    }

    void bool_expr(const BoolExpr& e) {
        switch (e.op) {
            case BoolExpr::Op::Less:
            case BoolExpr::Op::Equal:
            case BoolExpr::Op::Greater:
                int_expr(*e.left);
                int_expr(*e.right);
                emit(e.op == BoolExpr::Op::Less ? OpCode::Less
                     : e.op == BoolExpr::Op::Equal ? OpCode::Equal
                                                    : OpCode::Greater);
                break;
            case BoolExpr::Op::And:
            case BoolExpr::Op::Or: {
                bool_expr(*e.lhs);
                auto jump = emit(e.op == BoolExpr::Op::And ? OpCode::JumpIfZeroKeep : OpCode::JumpIfNonZeroKeep);
                emit(OpCode::Pop);
                bool_expr(*e.rhs);
                code_.ops[jump].arg = code_.ops.size();
                break;
            }
            case BoolExpr::Op::Not:
                bool_expr(*e.lhs);
                emit(OpCode::Not);
                break;
        }
    }

    void list(const std::vector<BlockNode>& blocks) {
        for (const auto& b : blocks) block(b);
    }

    void block(const BlockNode& n) {
        if (auto instr = action_instruction(n)) {
            code_.actions.push_back(*instr);
            emit(OpCode::Emit, code_.actions.size() - 1);
            return;
        }
        switch (n.kind) {
            case BlockKind::Sequence: list(n.body); break;
            case BlockKind::SetVar:
                int_expr(*n.value);
                emit(OpCode::Store, slot(n.var));
                break;
            case BlockKind::Repeat: {
                int_expr(*n.count);
                emit(OpCode::LoopEnter);
                auto head = emit(OpCode::LoopNext);
                list(n.body);
                emit(OpCode::Jump, head);
                code_.ops[head].arg = code_.ops.size();
                break;
            }
            case BlockKind::If: {
                bool_expr(*n.cond);
                auto to_else = emit(OpCode::JumpIfZero);
                list(n.then_branch);
                auto to_end = emit(OpCode::Jump);
                code_.ops[to_else].arg = code_.ops.size();
                list(n.else_branch);
                code_.ops[to_end].arg = code_.ops.size();
                break;
            }
            default: break;
        }
    }

    Bytecode code_;
    std::unordered_map<std::string, std::size_t> slots_;
};

std::vector<Instruction> execute(const Bytecode& code, const CompileLimits& limits) {
    std::vector<Instruction> trace;
    std::vector<std::int64_t> stack;
    std::vector<std::int64_t> loops;
    std::vector<std::optional<std::int64_t>> slots(code.slot_names.size());

    auto pop = [&] {
        auto v = stack.back();
        stack.pop_back();
        return v;
    };

    std::size_t pc = 0;
    while (pc < code.ops.size()) {
        const Op& op = code.ops[pc++];
        switch (op.code) {
            case OpCode::Emit:
                if (trace.size() >= limits.max_instructions) too_many(limits);
                trace.push_back(code.actions[op.arg]);
                break;
            case OpCode::PushConst: stack.push_back(op.imm); break;
            case OpCode::PushVar:
                if (!slots[op.arg]) throw CompileError(CompileErrorKind::UndefinedVariable, code.slot_names[op.arg]);
                stack.push_back(*slots[op.arg]);
                break;
            case OpCode::Store: slots[op.arg] = pop(); break;
            case OpCode::Add:
            case OpCode::Sub:
            case OpCode::Mul: {
                auto b = pop();
                auto a = pop();
                stack.push_back(arith(op.code == OpCode::Add   ? IntExpr::Op::Add
                                      : op.code == OpCode::Sub ? IntExpr::Op::Subtract
                                                               : IntExpr::Op::Multiply,
                                      a, b));
                break;
            }
            case OpCode::Less:
            case OpCode::Equal:
            case OpCode::Greater: {
                auto b = pop();
                auto a = pop();
                bool r = op.code == OpCode::Less ? a < b : op.code == OpCode::Equal ? a == b : a > b;
                stack.push_back(r ? 1 : 0);
                break;
            }
            case OpCode::Not: stack.back() = stack.back() == 0 ? 1 : 0; break;
            case OpCode::JumpIfZeroKeep:
                if (stack.back() == 0) pc = op.arg;
                break;
            case OpCode::JumpIfNonZeroKeep:
                if (stack.back() != 0) pc = op.arg;
                break;
            case OpCode::JumpIfZero:
                if (pop() == 0) pc = op.arg;
                break;
            case OpCode::Jump: pc = op.arg; break;
            case OpCode::Pop: stack.pop_back(); break;
            case OpCode::LoopEnter: {
                auto count = pop();
                check_repeat(count, limits);
                loops.push_back(count);
                break;
            }
            case OpCode::LoopNext:
                if (loops.back() == 0) {
                    loops.pop_back();
                    pc = op.arg;
                } else {
                    --loops.back();
                }
                break;
        }
    }
    return trace;
}

// ---------------------------------------------------------------------------
// Interpret route: recursive tree walk.

class TreeWalker {
public:
    explicit TreeWalker(const CompileLimits& limits) : limits_(limits) {}

    std::vector<Instruction> run(const BlockNode& root) {
        block(root);
        return std::move(trace_);
    }

private:
    std::int64_t eval(const IntExpr& e) {
        switch (e.op) {
            case IntExpr::Op::Literal: return e.value;
            case IntExpr::Op::Var: {
                auto it = vars_.find(e.var);
                if (it == vars_.end()) throw CompileError(CompileErrorKind::UndefinedVariable, e.var);
                return it->second;
            }
            default: {
                auto a = eval(*e.lhs);
                auto b = eval(*e.rhs);
                return arith(e.op, a, b);
            }
        }
    }

    bool test(const BoolExpr& e) {
        switch (e.op) {
            case BoolExpr::Op::Less: {
                auto a = eval(*e.left);
                return a < eval(*e.right);
            }
            case BoolExpr::Op::Equal: {
                auto a = eval(*e.left);
                return a == eval(*e.right);
            }
            case BoolExpr::Op::Greater: {
                auto a = eval(*e.left);
                return a > eval(*e.right);
            }
            case BoolExpr::Op::And: return test(*e.lhs) && test(*e.rhs);
            case BoolExpr::Op::Or: return test(*e.lhs) || test(*e.rhs);
            case BoolExpr::Op::Not: return !test(*e.lhs);
        }
        return false;
    }

    void list(const std::vector<BlockNode>& blocks) {
        for (const auto& b : blocks) block(b);
    }

    void block(const BlockNode& n) {
        if (auto instr = action_instruction(n)) {
            if (trace_.size() >= limits_.max_instructions) too_many(limits_);
            trace_.push_back(std::move(*instr));
            return;
        }
        switch (n.kind) {
            case BlockKind::Sequence: list(n.body); break;
            case BlockKind::SetVar: vars_[n.var] = eval(*n.value); break;
            case BlockKind::Repeat: {
                auto count = eval(*n.count);
                check_repeat(count, limits_);
                for (std::int64_t i = 0; i < count; ++i) list(n.body);
                break;
            }
            case BlockKind::If:
                if (test(*n.cond)) list(n.then_branch);
                else list(n.else_branch);
                break;
            default: break;
        }
    }

    const CompileLimits& limits_;
    std::map<std::string, std::int64_t> vars_;
    std::vector<Instruction> trace_;
};

}  // namespace

BlockNode parse_blocks(std::string_view source, const ExpressionSet& expressions) {
    json doc;
    try {
        doc = json::parse(source);
    } catch (const json::parse_error& e) {
        throw BlockParseError("$", std::string("malformed document: ") + e.what());
    }
    return DocParser(expressions).block(doc, "$", 0);
}

std::string to_document(const BlockNode& root) { return block_to_json(root).dump(); }

Program compile(const BlockNode& root, const CompileLimits& limits) {
    Program p;
    p.instructions = execute(Lowering{}.run(root), limits);
    return p;
}

Program interpret(const BlockNode& root, const CompileLimits& limits) {
    Program p;
    p.instructions = TreeWalker(limits).run(root);
    return p;
}

std::string emit_script(const Program& p) {
    std::string out;
    for (const auto& i : p.instructions) {
        out += serialize_instruction(i);
        out += '\n';
    }
    return out;
}

}  // namespace wolly::blocks

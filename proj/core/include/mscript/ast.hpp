#pragma once

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "mscript/value.hpp"

namespace mscript {

struct Expr;
struct Stmt;
using ExprPtr = std::unique_ptr<Expr>;
using StmtPtr = std::unique_ptr<Stmt>;

enum class BinaryOp { add, sub, mul, div, floordiv, mod };
enum class CompareOp { eq, ne, lt, le, gt, ge };
enum class UnaryOp { neg, not_ };
enum class BoolOp { and_, or_ };

struct Expr {
    enum class Kind {
        literal,
        name,
        list,
        dict,
        attribute,
        subscript,
        call,
        binary,
        compare,
        unary,
        boolean,
    };

    Kind kind;
    int line = 0;
    int col = 0;

    explicit Expr(Kind k) : kind(k) {}
    virtual ~Expr() = default;
};

struct LiteralExpr : Expr {
    Value value;  // None, bool, int, float, or str only
    LiteralExpr() : Expr(Kind::literal) {}
};

struct NameExpr : Expr {
    std::string name;
    NameExpr() : Expr(Kind::name) {}
};

struct ListExpr : Expr {
    std::vector<ExprPtr> items;
    ListExpr() : Expr(Kind::list) {}
};

struct DictExpr : Expr {
    std::vector<std::pair<ExprPtr, ExprPtr>> items;
    DictExpr() : Expr(Kind::dict) {}
};

struct AttributeExpr : Expr {
    ExprPtr object;
    std::string name;
    AttributeExpr() : Expr(Kind::attribute) {}
};

struct SubscriptExpr : Expr {
    ExprPtr object;
    ExprPtr index;
    SubscriptExpr() : Expr(Kind::subscript) {}
};

struct CallExpr : Expr {
    ExprPtr callee;
    std::vector<ExprPtr> args;
    CallExpr() : Expr(Kind::call) {}
};

struct BinaryExpr : Expr {
    BinaryOp op;
    ExprPtr lhs;
    ExprPtr rhs;
    BinaryExpr() : Expr(Kind::binary) {}
};

struct CompareExpr : Expr {
    CompareOp op;
    ExprPtr lhs;
    ExprPtr rhs;
    CompareExpr() : Expr(Kind::compare) {}
};

struct UnaryExpr : Expr {
    UnaryOp op;
    ExprPtr operand;
    UnaryExpr() : Expr(Kind::unary) {}
};

struct BoolExpr : Expr {
    BoolOp op;
    ExprPtr lhs;
    ExprPtr rhs;
    BoolExpr() : Expr(Kind::boolean) {}
};

struct ImportDecl {
    std::string module;
    std::vector<std::string> names;  // empty for plain `import X`

    bool operator==(const ImportDecl&) const = default;
};

struct Stmt {
    enum class Kind {
        expr,
        assign,
        ret,
        pass,
        import_,
        from_import,
        if_,
        while_,
        for_,
        func_def,
        class_def,
    };

    Kind kind;
    int line = 0;

    explicit Stmt(Kind k) : kind(k) {}
    virtual ~Stmt() = default;
};

struct ExprStmt : Stmt {
    ExprPtr expr;
    ExprStmt() : Stmt(Kind::expr) {}
};

struct AssignStmt : Stmt {
    ExprPtr target;  // name, attribute, or subscript
    ExprPtr value;
    AssignStmt() : Stmt(Kind::assign) {}
};

struct ReturnStmt : Stmt {
    ExprPtr value;  // null for bare return
    ReturnStmt() : Stmt(Kind::ret) {}
};

struct PassStmt : Stmt {
    PassStmt() : Stmt(Kind::pass) {}
};

struct ImportStmt : Stmt {
    std::string module;
    ImportStmt() : Stmt(Kind::import_) {}
};

struct FromImportStmt : Stmt {
    std::string module;
    std::vector<std::string> names;
    FromImportStmt() : Stmt(Kind::from_import) {}
};

struct IfStmt : Stmt {
    ExprPtr cond;
    std::vector<StmtPtr> body;
    std::vector<StmtPtr> orelse;  // elif chains nest here
    IfStmt() : Stmt(Kind::if_) {}
};

struct WhileStmt : Stmt {
    ExprPtr cond;
    std::vector<StmtPtr> body;
    WhileStmt() : Stmt(Kind::while_) {}
};

struct ForStmt : Stmt {
    std::string var;
    ExprPtr iterable;
    std::vector<StmtPtr> body;
    ForStmt() : Stmt(Kind::for_) {}
};

struct ParamDecl {
    std::string name;
    ExprPtr default_value;  // evaluated when the def executes
};

struct FuncDefStmt : Stmt {
    std::string name;
    std::vector<ParamDecl> params;
    std::vector<StmtPtr> body;
    FuncDefStmt() : Stmt(Kind::func_def) {}
};

struct ClassDefStmt : Stmt {
    std::string name;
    std::vector<std::unique_ptr<FuncDefStmt>> methods;
    ClassDefStmt() : Stmt(Kind::class_def) {}
};

struct ModuleAST {
    std::string name;
    std::vector<StmtPtr> statements;
    // Every `import X` / `from X import y` anywhere in the source, including
    // inside function bodies, in source order.
    std::vector<ImportDecl> imports;
};

}  // namespace mscript

#include "mscript/parser.hpp"

#include "mscript/errors.hpp"
#include "mscript/lexer.hpp"

namespace mscript {

namespace {

struct Parser {
    std::vector<Token> tokens;
    size_t pos = 0;
    ModuleAST* module = nullptr;

    const Token& peek(size_t ahead = 0) const {
        size_t i = pos + ahead;
        return i < tokens.size() ? tokens[i] : tokens.back();
    }

    const Token& advance() { return tokens[pos < tokens.size() - 1 ? pos++ : pos]; }

    [[noreturn]] void fail(const std::string& msg) const {
        const Token& t = peek();
        std::string shown = t.text;
        if (t.kind == TokenKind::newline) shown = "<newline>";
        if (t.kind == TokenKind::indent) shown = "<indent>";
        if (t.kind == TokenKind::dedent) shown = "<dedent>";
        if (t.kind == TokenKind::end) shown = "<eof>";
        throw SyntaxError(msg, t.line, t.col, shown);
    }

    bool accept_op(const char* s) {
        if (peek().is_op(s)) {
            advance();
            return true;
        }
        return false;
    }

    bool accept_keyword(const char* s) {
        if (peek().is_keyword(s)) {
            advance();
            return true;
        }
        return false;
    }

    void expect_op(const char* s) {
        if (!accept_op(s)) fail(std::string("expected '") + s + "'");
    }

    void expect_newline() {
        if (peek().kind != TokenKind::newline) fail("expected end of line");
        advance();
    }

    std::string expect_name() {
        if (peek().kind != TokenKind::name) fail("expected a name");
        return advance().text;
    }

    std::string dotted_name() {
        std::string name = expect_name();
        while (accept_op(".")) {
            name += ".";
            name += expect_name();
        }
        return name;
    }

    template <typename T>
    std::unique_ptr<T> make_expr() {
        auto node = std::make_unique<T>();
        node->line = peek().line;
        node->col = peek().col;
        return node;
    }

    // atom: literal | name | (expr) | [list] | {dict}
    ExprPtr parse_atom() {
        const Token& t = peek();
        if (t.kind == TokenKind::int_lit) {
            auto node = make_expr<LiteralExpr>();
            node->value = Value(advance().int_value);
            return node;
        }
        if (t.kind == TokenKind::float_lit) {
            auto node = make_expr<LiteralExpr>();
            node->value = Value(advance().float_value);
            return node;
        }
        if (t.kind == TokenKind::str_lit) {
            auto node = make_expr<LiteralExpr>();
            node->value = Value(advance().text);
            return node;
        }
        if (t.is_keyword("None")) {
            auto node = make_expr<LiteralExpr>();
            advance();
            return node;
        }
        if (t.is_keyword("True") || t.is_keyword("False")) {
            auto node = make_expr<LiteralExpr>();
            node->value = Value(advance().text == "True");
            return node;
        }
        if (t.kind == TokenKind::name) {
            auto node = make_expr<NameExpr>();
            node->name = advance().text;
            return node;
        }
        if (t.is_op("(")) {
            advance();
            ExprPtr inner = parse_expr();
            expect_op(")");
            return inner;
        }
        if (t.is_op("[")) {
            auto node = make_expr<ListExpr>();
            advance();
            if (!peek().is_op("]")) {
                node->items.push_back(parse_expr());
                while (accept_op(",")) {
                    if (peek().is_op("]")) break;  // trailing comma
                    node->items.push_back(parse_expr());
                }
            }
            expect_op("]");
            return node;
        }
        if (t.is_op("{")) {
            auto node = make_expr<DictExpr>();
            advance();
            if (!peek().is_op("}")) {
                do {
                    if (peek().is_op("}")) break;
                    ExprPtr key = parse_expr();
                    expect_op(":");
                    ExprPtr value = parse_expr();
                    node->items.emplace_back(std::move(key), std::move(value));
                } while (accept_op(","));
            }
            expect_op("}");
            return node;
        }
        fail("expected an expression");
    }

    ExprPtr parse_postfix() {
        ExprPtr expr = parse_atom();
        while (true) {
            if (peek().is_op("(")) {
                auto node = make_expr<CallExpr>();
                advance();
                if (!peek().is_op(")")) {
                    node->args.push_back(parse_expr());
                    while (accept_op(",")) {
                        if (peek().is_op(")")) break;
                        node->args.push_back(parse_expr());
                    }
                }
                expect_op(")");
                node->callee = std::move(expr);
                node->line = node->callee->line;
                expr = std::move(node);
            } else if (peek().is_op("[")) {
                auto node = make_expr<SubscriptExpr>();
                advance();
                node->index = parse_expr();
                expect_op("]");
                node->object = std::move(expr);
                node->line = node->object->line;
                expr = std::move(node);
            } else if (peek().is_op(".")) {
                auto node = make_expr<AttributeExpr>();
                advance();
                node->name = expect_name();
                node->object = std::move(expr);
                node->line = node->object->line;
                expr = std::move(node);
            } else {
                return expr;
            }
        }
    }

    ExprPtr parse_unary() {
        if (peek().is_op("-")) {
            auto node = make_expr<UnaryExpr>();
            advance();
            node->op = UnaryOp::neg;
            node->operand = parse_unary();
            return node;
        }
        if (accept_op("+")) {
            return parse_unary();
        }
        return parse_postfix();
    }

    ExprPtr parse_term() {
        ExprPtr expr = parse_unary();
        while (true) {
            BinaryOp op;
            if (peek().is_op("*")) op = BinaryOp::mul;
            else if (peek().is_op("/")) op = BinaryOp::div;
            else if (peek().is_op("//")) op = BinaryOp::floordiv;
            else if (peek().is_op("%")) op = BinaryOp::mod;
            else return expr;
            auto node = make_expr<BinaryExpr>();
            advance();
            node->op = op;
            node->rhs = parse_unary();
            node->lhs = std::move(expr);
            node->line = node->lhs->line;
            expr = std::move(node);
        }
    }

    ExprPtr parse_arith() {
        ExprPtr expr = parse_term();
        while (peek().is_op("+") || peek().is_op("-")) {
            auto node = make_expr<BinaryExpr>();
            node->op = peek().is_op("+") ? BinaryOp::add : BinaryOp::sub;
            advance();
            node->rhs = parse_term();
            node->lhs = std::move(expr);
            node->line = node->lhs->line;
            expr = std::move(node);
        }
        return expr;
    }

    ExprPtr parse_comparison() {
        ExprPtr expr = parse_arith();
        CompareOp op;
        if (peek().is_op("==")) op = CompareOp::eq;
        else if (peek().is_op("!=")) op = CompareOp::ne;
        else if (peek().is_op("<")) op = CompareOp::lt;
        else if (peek().is_op("<=")) op = CompareOp::le;
        else if (peek().is_op(">")) op = CompareOp::gt;
        else if (peek().is_op(">=")) op = CompareOp::ge;
        else return expr;
        auto node = make_expr<CompareExpr>();
        advance();
        node->op = op;
        node->rhs = parse_arith();
        node->lhs = std::move(expr);
        node->line = node->lhs->line;
        if (peek().is_op("==") || peek().is_op("!=") || peek().is_op("<") ||
            peek().is_op("<=") || peek().is_op(">") || peek().is_op(">=")) {
            fail("chained comparisons are not supported");
        }
        return node;
    }

    ExprPtr parse_not() {
        if (accept_keyword("not")) {
            auto node = make_expr<UnaryExpr>();
            node->op = UnaryOp::not_;
            node->operand = parse_not();
            return node;
        }
        return parse_comparison();
    }

    ExprPtr parse_and() {
        ExprPtr expr = parse_not();
        while (peek().is_keyword("and")) {
            auto node = make_expr<BoolExpr>();
            advance();
            node->op = BoolOp::and_;
            node->rhs = parse_not();
            node->lhs = std::move(expr);
            node->line = node->lhs->line;
            expr = std::move(node);
        }
        return expr;
    }

    ExprPtr parse_expr() {
        ExprPtr expr = parse_and();
        while (peek().is_keyword("or")) {
            auto node = make_expr<BoolExpr>();
            advance();
            node->op = BoolOp::or_;
            node->rhs = parse_and();
            node->lhs = std::move(expr);
            node->line = node->lhs->line;
            expr = std::move(node);
        }
        return expr;
    }

    std::vector<StmtPtr> parse_suite() {
        expect_op(":");
        if (peek().kind != TokenKind::newline) {
            // One-line form: `if x: return y`
            std::vector<StmtPtr> body;
            body.push_back(parse_simple_stmt());
            expect_newline();
            return body;
        }
        advance();  // newline
        if (peek().kind != TokenKind::indent) fail("expected an indented block");
        advance();
        std::vector<StmtPtr> body;
        while (peek().kind != TokenKind::dedent && peek().kind != TokenKind::end) {
            body.push_back(parse_stmt());
        }
        if (peek().kind == TokenKind::dedent) advance();
        return body;
    }

    StmtPtr parse_simple_stmt() {
        int line = peek().line;
        if (accept_keyword("return")) {
            auto node = std::make_unique<ReturnStmt>();
            node->line = line;
            if (peek().kind != TokenKind::newline) node->value = parse_expr();
            return node;
        }
        if (accept_keyword("pass")) {
            auto node = std::make_unique<PassStmt>();
            node->line = line;
            return node;
        }
        if (accept_keyword("import")) {
            auto node = std::make_unique<ImportStmt>();
            node->line = line;
            node->module = dotted_name();
            module->imports.push_back(ImportDecl{node->module, {}});
            return node;
        }
        if (accept_keyword("from")) {
            auto node = std::make_unique<FromImportStmt>();
            node->line = line;
            node->module = dotted_name();
            if (!accept_keyword("import")) fail("expected 'import'");
            node->names.push_back(expect_name());
            while (accept_op(",")) node->names.push_back(expect_name());
            module->imports.push_back(ImportDecl{node->module, node->names});
            return node;
        }
        ExprPtr expr = parse_expr();
        if (accept_op("=")) {
            if (expr->kind != Expr::Kind::name && expr->kind != Expr::Kind::attribute &&
                expr->kind != Expr::Kind::subscript) {
                fail("cannot assign to this expression");
            }
            auto node = std::make_unique<AssignStmt>();
            node->line = line;
            node->target = std::move(expr);
            node->value = parse_expr();
            return node;
        }
        auto node = std::make_unique<ExprStmt>();
        node->line = line;
        node->expr = std::move(expr);
        return node;
    }

    std::unique_ptr<FuncDefStmt> parse_func_def() {
        int line = peek().line;
        advance();  // def
        auto node = std::make_unique<FuncDefStmt>();
        node->line = line;
        node->name = expect_name();
        expect_op("(");
        bool seen_default = false;
        if (!peek().is_op(")")) {
            do {
                if (peek().is_op(")")) break;
                ParamDecl param;
                param.name = expect_name();
                if (accept_op("=")) {
                    param.default_value = parse_expr();
                    seen_default = true;
                } else if (seen_default) {
                    fail("parameter without default follows one with a default");
                }
                for (const auto& p : node->params) {
                    if (p.name == param.name) fail("duplicate parameter '" + param.name + "'");
                }
                node->params.push_back(std::move(param));
            } while (accept_op(","));
        }
        expect_op(")");
        node->body = parse_suite();
        return node;
    }

    StmtPtr parse_stmt() {
        const Token& t = peek();
        if (t.is_keyword("if")) {
            int line = t.line;
            advance();
            auto node = std::make_unique<IfStmt>();
            node->line = line;
            node->cond = parse_expr();
            node->body = parse_suite();
            if (peek().is_keyword("elif")) {
                // Rewrite `elif` as a nested if in the else branch.
                Token& tok = tokens[pos];
                tok.text = "if";
                auto nested = parse_stmt();
                node->orelse.push_back(std::move(nested));
            } else if (accept_keyword("else")) {
                node->orelse = parse_suite();
            }
            return node;
        }
        if (t.is_keyword("while")) {
            int line = t.line;
            advance();
            auto node = std::make_unique<WhileStmt>();
            node->line = line;
            node->cond = parse_expr();
            node->body = parse_suite();
            return node;
        }
        if (t.is_keyword("for")) {
            int line = t.line;
            advance();
            auto node = std::make_unique<ForStmt>();
            node->line = line;
            node->var = expect_name();
            if (!accept_keyword("in")) fail("expected 'in'");
            node->iterable = parse_expr();
            node->body = parse_suite();
            return node;
        }
        if (t.is_keyword("def")) {
            return parse_func_def();
        }
        if (t.is_keyword("class")) {
            int line = t.line;
            advance();
            auto node = std::make_unique<ClassDefStmt>();
            node->line = line;
            node->name = expect_name();
            if (peek().is_op("(")) fail("class bases are not supported");
            expect_op(":");
            expect_newline();
            if (peek().kind != TokenKind::indent) fail("expected an indented class body");
            advance();
            while (peek().kind != TokenKind::dedent && peek().kind != TokenKind::end) {
                if (peek().is_keyword("pass")) {
                    advance();
                    expect_newline();
                    continue;
                }
                if (!peek().is_keyword("def")) {
                    fail("class bodies may contain only methods and pass");
                }
                node->methods.push_back(parse_func_def());
            }
            if (peek().kind == TokenKind::dedent) advance();
            return node;
        }
        StmtPtr stmt = parse_simple_stmt();
        expect_newline();
        return stmt;
    }

    void run(ModuleAST& ast) {
        module = &ast;
        while (peek().kind != TokenKind::end) {
            if (peek().kind == TokenKind::newline) {
                advance();
                continue;
            }
            ast.statements.push_back(parse_stmt());
        }
    }
};

}  // namespace

std::shared_ptr<const ModuleAST> parse_module(const std::string& name, const std::string& source) {
    auto ast = std::make_shared<ModuleAST>();
    ast->name = name;
    Parser parser;
    parser.tokens = tokenize(source);
    parser.run(*ast);
    return ast;
}

}  // namespace mscript

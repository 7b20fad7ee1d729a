#include "dvs/parser.hpp"

#include <fstream>
#include <memory>
#include <sstream>
#include <unordered_set>

#include <json.hpp>

namespace dvs {

namespace {

using nlohmann::json;

struct Tmp {
    NodeKind kind;
    int lo = 0;
    int hi = 0;
    std::vector<std::unique_ptr<Tmp>> kids;
};
using TmpPtr = std::unique_ptr<Tmp>;

// Internal backtracking signal; converted to StmtOpaque at statement level.
struct Fail {};

const std::unordered_set<std::string_view> kTypeKeywords = {
    "void", "char",  "short",  "int",      "long",     "float",  "double", "signed",
    "unsigned", "bool", "const", "volatile", "static", "register", "auto", "extern",
    "inline", "struct", "union", "enum", "typedef",
};

const std::unordered_set<std::string_view> kAssignOps = {
    "=", "+=", "-=", "*=", "/=", "%=", "&=", "|=", "^=", "<<=", ">>=",
};

// Binary operator precedence tiers, loosest first.
const std::vector<std::vector<std::string_view>> kBinaryTiers = {
    {"||"}, {"&&"}, {"|"}, {"^"}, {"&"}, {"==", "!="},
    {"<", ">", "<=", ">="}, {"<<", ">>"}, {"+", "-"}, {"*", "/", "%"},
};

class Parser {
public:
    explicit Parser(const TokenStream& ts) : toks_(ts.tokens) {
        for (int i = 0; i < static_cast<int>(toks_.size()); ++i) {
            const Token& t = toks_[i];
            if (t.kind == TokenKind::Punctuation && !t.text.empty() && t.text[0] == '#')
                continue;  // preprocessor lines are opaque to the grammar
            idx_.push_back(i);
        }
    }

    std::vector<TmpPtr> run() {
        std::vector<TmpPtr> roots;
        while (!eof()) {
            TmpPtr fn = try_function_def();
            if (fn) roots.push_back(std::move(fn));
            else roots.push_back(statement());
        }
        return roots;
    }

private:
    const std::vector<Token>& toks_;
    std::vector<int> idx_;  // parseable token positions, original indices
    std::size_t pos_ = 0;

    bool eof() const { return pos_ >= idx_.size(); }
    const Token& tok(std::size_t p) const { return toks_[idx_[p]]; }
    const Token& cur() const { return tok(pos_); }
    int orig(std::size_t p) const { return idx_[p]; }

    bool at(std::string_view text) const { return !eof() && cur().text == text; }
    bool at_kind(TokenKind k) const { return !eof() && cur().kind == k; }
    bool peek_is(std::size_t ahead, std::string_view text) const {
        return pos_ + ahead < idx_.size() && tok(pos_ + ahead).text == text;
    }

    int eat() {
        if (eof()) throw Fail{};
        return orig(pos_++);
    }
    int expect(std::string_view text) {
        if (!at(text)) throw Fail{};
        return eat();
    }

    static TmpPtr leaf(NodeKind k, int at) {
        auto n = std::make_unique<Tmp>();
        n->kind = k;
        n->lo = n->hi = at;
        return n;
    }

    static void cover(Tmp& n) {
        for (const auto& k : n.kids) {
            n.lo = std::min(n.lo, k->lo);
            n.hi = std::max(n.hi, k->hi);
        }
    }

    bool is_type_keyword_at(std::size_t p) const {
        return p < idx_.size() && tok(p).kind == TokenKind::Keyword &&
               kTypeKeywords.count(tok(p).text) > 0;
    }

    // identifier used as a typedef name: `T x`, `T *x`, `T **x = ...`
    bool looks_like_typedef_decl() const {
        if (!at_kind(TokenKind::Identifier)) return false;
        std::size_t p = pos_ + 1;
        while (p < idx_.size() && tok(p).text == "*") ++p;
        if (p == pos_ + 1 && !(p < idx_.size() && tok(p).kind == TokenKind::Identifier))
            return false;
        if (!(p < idx_.size() && tok(p).kind == TokenKind::Identifier)) return false;
        ++p;
        if (p >= idx_.size()) return false;
        const std::string& nxt = tok(p).text;
        return nxt == "=" || nxt == ";" || nxt == "," || nxt == "[";
    }

    // ---- declarations -------------------------------------------------

    TmpPtr type_name() {
        auto n = std::make_unique<Tmp>();
        n->kind = NodeKind::TypeName;
        n->lo = orig(pos_);
        bool any = false;
        while (is_type_keyword_at(pos_)) {
            const bool tagged = cur().text == "struct" || cur().text == "union" ||
                                cur().text == "enum";
            n->hi = eat();
            any = true;
            if (tagged && at_kind(TokenKind::Identifier)) n->hi = eat();
        }
        if (!any) {
            if (!at_kind(TokenKind::Identifier)) throw Fail{};
            n->hi = eat();
        }
        while (at("*")) n->hi = eat();
        return n;
    }

    TmpPtr declaration() {
        auto n = std::make_unique<Tmp>();
        n->kind = NodeKind::Decl;
        n->lo = orig(pos_);
        n->kids.push_back(type_name());
        while (true) {
            while (at("*")) eat();
            if (!at_kind(TokenKind::Identifier)) throw Fail{};
            n->kids.push_back(leaf(NodeKind::IdentifierUse, eat()));
            while (at("[")) {
                eat();
                if (!at("]")) n->kids.push_back(expression());
                expect("]");
            }
            if (at("=")) {
                n->kids.push_back(leaf(NodeKind::OperatorTok, eat()));
                n->kids.push_back(assignment());
            }
            if (at(",")) { eat(); continue; }
            break;
        }
        n->hi = expect(";");
        cover(*n);
        n->hi = std::max(n->hi, orig(pos_ - 1));
        return n;
    }

    // ---- expressions --------------------------------------------------

    TmpPtr expression() { return assignment(); }

    TmpPtr assignment() {
        TmpPtr lhs = ternary();
        if (!eof() && cur().kind == TokenKind::Operator && kAssignOps.count(cur().text)) {
            auto n = std::make_unique<Tmp>();
            n->kind = NodeKind::Assign;
            n->kids.push_back(std::move(lhs));
            n->kids.push_back(leaf(NodeKind::OperatorTok, eat()));
            n->kids.push_back(assignment());
            n->lo = n->kids.front()->lo;
            n->hi = n->kids.back()->hi;
            return n;
        }
        return lhs;
    }

    TmpPtr ternary() {
        TmpPtr c = binary(0);
        if (at("?")) {
            auto n = std::make_unique<Tmp>();
            n->kind = NodeKind::Ternary;
            n->kids.push_back(std::move(c));
            n->kids.push_back(leaf(NodeKind::OperatorTok, eat()));
            n->kids.push_back(expression());
            n->kids.push_back(leaf(NodeKind::OperatorTok, expect(":")));
            n->kids.push_back(assignment());
            n->lo = n->kids.front()->lo;
            n->hi = n->kids.back()->hi;
            return n;
        }
        return c;
    }

    TmpPtr binary(std::size_t tier) {
        if (tier >= kBinaryTiers.size()) return unary();
        TmpPtr lhs = binary(tier + 1);
        while (!eof() && cur().kind == TokenKind::Operator) {
            bool hit = false;
            for (auto op : kBinaryTiers[tier]) hit = hit || cur().text == op;
            if (!hit) break;
            auto n = std::make_unique<Tmp>();
            n->kind = NodeKind::BinaryExpr;
            n->kids.push_back(std::move(lhs));
            n->kids.push_back(leaf(NodeKind::OperatorTok, eat()));
            n->kids.push_back(binary(tier + 1));
            n->lo = n->kids.front()->lo;
            n->hi = n->kids.back()->hi;
            lhs = std::move(n);
        }
        return lhs;
    }

    bool at_cast() const {
        return at("(") && pos_ + 1 < idx_.size() && is_type_keyword_at(pos_ + 1);
    }

    TmpPtr unary() {
        if (!eof()) {
            const std::string& t = cur().text;
            const bool prefix = t == "!" || t == "~" || t == "-" || t == "+" || t == "*" ||
                                t == "&" || t == "++" || t == "--";
            if (prefix || at("sizeof") || at_cast()) {
                auto n = std::make_unique<Tmp>();
                n->kind = NodeKind::UnaryExpr;
                if (at_cast()) {
                    n->lo = eat();  // '('
                    n->kids.push_back(type_name());
                    expect(")");
                    n->kids.push_back(unary());
                    n->hi = n->kids.back()->hi;
                } else if (at("sizeof")) {
                    n->kids.push_back(leaf(NodeKind::OperatorTok, eat()));
                    if (at_cast()) {
                        eat();
                        n->kids.push_back(type_name());
                        n->hi = expect(")");
                        n->lo = n->kids.front()->lo;
                        return n;
                    }
                    n->kids.push_back(unary());
                    n->lo = n->kids.front()->lo;
                    n->hi = n->kids.back()->hi;
                } else {
                    n->kids.push_back(leaf(NodeKind::OperatorTok, eat()));
                    n->kids.push_back(unary());
                    n->lo = n->kids.front()->lo;
                    n->hi = n->kids.back()->hi;
                }
                return n;
            }
        }
        return postfix();
    }

    TmpPtr postfix() {
        TmpPtr base = primary();
        while (!eof()) {
            if (at("(")) {
                auto n = std::make_unique<Tmp>();
                n->kind = NodeKind::Call;
                n->lo = base->lo;
                n->kids.push_back(std::move(base));
                eat();
                if (!at(")")) {
                    n->kids.push_back(assignment());
                    while (at(",")) {
                        eat();
                        n->kids.push_back(assignment());
                    }
                }
                n->hi = expect(")");
                base = std::move(n);
            } else if (at("[")) {
                auto n = std::make_unique<Tmp>();
                n->kind = NodeKind::IndexExpr;
                n->lo = base->lo;
                n->kids.push_back(std::move(base));
                eat();
                n->kids.push_back(expression());
                n->hi = expect("]");
                base = std::move(n);
            } else if (at(".") || at("->")) {
                auto n = std::make_unique<Tmp>();
                n->kind = NodeKind::BinaryExpr;
                n->lo = base->lo;
                n->kids.push_back(std::move(base));
                n->kids.push_back(leaf(NodeKind::OperatorTok, eat()));
                if (!at_kind(TokenKind::Identifier)) throw Fail{};
                n->kids.push_back(leaf(NodeKind::IdentifierUse, eat()));
                n->hi = n->kids.back()->hi;
                base = std::move(n);
            } else if (at("++") || at("--")) {
                auto n = std::make_unique<Tmp>();
                n->kind = NodeKind::UnaryExpr;
                n->lo = base->lo;
                n->kids.push_back(std::move(base));
                n->kids.push_back(leaf(NodeKind::OperatorTok, eat()));
                n->hi = n->kids.back()->hi;
                base = std::move(n);
            } else {
                break;
            }
        }
        return base;
    }

    TmpPtr primary() {
        if (at_kind(TokenKind::Identifier)) return leaf(NodeKind::IdentifierUse, eat());
        if (at_kind(TokenKind::Number) || at_kind(TokenKind::StringLiteral) ||
            at_kind(TokenKind::CharLiteral))
            return leaf(NodeKind::Literal, eat());
        if (at("(")) {
            eat();
            TmpPtr inner = expression();
            expect(")");
            return inner;
        }
        throw Fail{};
    }

    // ---- statements ---------------------------------------------------

    TmpPtr statement() {
        const std::size_t save = pos_;
        try {
            return structured_statement();
        } catch (const Fail&) {
            pos_ = save;
            return opaque_statement();
        }
    }

    TmpPtr structured_statement() {
        if (eof()) throw Fail{};
        if (at("{")) return block();
        if (at("if")) return if_statement();
        if (at("while")) return while_statement();
        if (at("do")) return do_while_statement();
        if (at("for")) return for_statement();
        if (at("return")) return return_statement();
        if (at("break") || at("continue")) {
            auto n = std::make_unique<Tmp>();
            n->kind = at("break") ? NodeKind::Break : NodeKind::Continue;
            n->lo = eat();
            n->hi = expect(";");
            return n;
        }
        if (at(";")) {  // stray empty statement
            return leaf(NodeKind::StmtOpaque, eat());
        }
        if (is_type_keyword_at(pos_) || looks_like_typedef_decl()) return declaration();
        TmpPtr e = expression();
        expect(";");
        return e;
    }

    TmpPtr block() {
        auto n = std::make_unique<Tmp>();
        n->kind = NodeKind::Block;
        n->lo = expect("{");
        while (!eof() && !at("}")) n->kids.push_back(statement());
        n->hi = expect("}");
        return n;
    }

    TmpPtr if_statement() {
        auto n = std::make_unique<Tmp>();
        n->kind = NodeKind::If;
        n->lo = expect("if");
        expect("(");
        n->kids.push_back(expression());
        expect(")");
        n->kids.push_back(statement());
        if (at("else")) {
            eat();
            n->kids.push_back(statement());
        }
        n->hi = n->kids.back()->hi;
        return n;
    }

    TmpPtr while_statement() {
        auto n = std::make_unique<Tmp>();
        n->kind = NodeKind::While;
        n->lo = expect("while");
        expect("(");
        n->kids.push_back(expression());
        expect(")");
        n->kids.push_back(statement());
        n->hi = n->kids.back()->hi;
        return n;
    }

    TmpPtr do_while_statement() {
        auto n = std::make_unique<Tmp>();
        n->kind = NodeKind::DoWhile;
        n->lo = expect("do");
        n->kids.push_back(statement());
        expect("while");
        expect("(");
        n->kids.push_back(expression());
        expect(")");
        n->hi = expect(";");
        return n;
    }

    TmpPtr for_statement() {
        auto n = std::make_unique<Tmp>();
        n->kind = NodeKind::For;
        n->lo = expect("for");
        expect("(");
        // Children are always [init, cond, step, body]; absent clauses become
        // Empty-style StmtOpaque markers over the adjacent separator token.
        if (at(";")) {
            n->kids.push_back(leaf(NodeKind::StmtOpaque, eat()));
        } else if (is_type_keyword_at(pos_) || looks_like_typedef_decl()) {
            n->kids.push_back(declaration());  // consumes its ';'
        } else {
            TmpPtr e = expression();
            expect(";");
            n->kids.push_back(std::move(e));
        }
        if (at(";")) n->kids.push_back(leaf(NodeKind::StmtOpaque, eat()));
        else {
            n->kids.push_back(expression());
            expect(";");
        }
        if (at(")")) n->kids.push_back(leaf(NodeKind::StmtOpaque, orig(pos_)));
        else n->kids.push_back(expression());
        expect(")");
        n->kids.push_back(statement());
        n->hi = n->kids.back()->hi;
        return n;
    }

    TmpPtr return_statement() {
        auto n = std::make_unique<Tmp>();
        n->kind = NodeKind::Return;
        n->lo = expect("return");
        if (!at(";")) n->kids.push_back(expression());
        n->hi = expect(";");
        return n;
    }

    TmpPtr opaque_statement() {
        auto n = std::make_unique<Tmp>();
        n->kind = NodeKind::StmtOpaque;
        n->lo = orig(pos_);
        int depth = 0;
        int last = n->lo;
        while (!eof()) {
            const std::string& t = cur().text;
            if (depth == 0 && (t == "}" )) break;  // let enclosing block close
            last = eat();
            if (t == "{" || t == "(" || t == "[") ++depth;
            else if (t == "}" || t == ")" || t == "]") {
                --depth;
                if (depth <= 0 && t == "}") break;
            } else if (t == ";" && depth == 0) {
                break;
            }
        }
        n->hi = last;
        return n;
    }

    // ---- function definitions -----------------------------------------

    TmpPtr try_function_def() {
        const std::size_t save = pos_;
        try {
            // pattern: type tokens+  name  '(' params ')'  '{' body '}'
            std::size_t p = pos_;
            std::size_t name = idx_.size();
            while (p < idx_.size()) {
                const Token& t = tok(p);
                if (t.text == "*" || (t.kind == TokenKind::Keyword && kTypeKeywords.count(t.text)) ||
                    t.kind == TokenKind::Identifier) {
                    if (t.kind == TokenKind::Identifier && peek_at(p + 1, "(")) {
                        name = p;
                        break;
                    }
                    ++p;
                } else {
                    throw Fail{};
                }
            }
            if (name == idx_.size() || name == pos_) throw Fail{};
            auto n = std::make_unique<Tmp>();
            n->kind = NodeKind::FunctionDef;
            n->lo = orig(pos_);
            pos_ = name;  // re-parse the return type region as one TypeName
            auto ret = std::make_unique<Tmp>();
            ret->kind = NodeKind::TypeName;
            ret->lo = orig(save);
            ret->hi = orig(name - 1);
            n->kids.push_back(std::move(ret));
            n->kids.push_back(leaf(NodeKind::IdentifierUse, eat()));
            n->kids.push_back(param_list());
            if (!at("{")) throw Fail{};
            n->kids.push_back(block());
            n->hi = n->kids.back()->hi;
            return n;
        } catch (const Fail&) {
            pos_ = save;
            return nullptr;
        }
    }

    bool peek_at(std::size_t p, std::string_view text) const {
        return p < idx_.size() && tok(p).text == text;
    }

    TmpPtr param_list() {
        auto n = std::make_unique<Tmp>();
        n->kind = NodeKind::ParamList;
        n->lo = expect("(");
        while (!eof() && !at(")")) {
            auto prm = std::make_unique<Tmp>();
            prm->kind = NodeKind::Param;
            prm->lo = orig(pos_);
            prm->hi = prm->lo;
            // consume one parameter: everything to the next top-level ',' or ')'
            int depth = 0;
            std::size_t plast = pos_;
            std::size_t last_ident = idx_.size();
            std::size_t first = pos_;
            while (!eof()) {
                const std::string& t = cur().text;
                if (depth == 0 && (t == "," || t == ")")) break;
                if (t == "(" || t == "[") ++depth;
                if (t == ")" || t == "]") --depth;
                if (cur().kind == TokenKind::Identifier) last_ident = pos_;
                plast = pos_;
                eat();
            }
            prm->hi = orig(plast);
            if (last_ident != idx_.size() && last_ident > first) {
                auto tn = std::make_unique<Tmp>();
                tn->kind = NodeKind::TypeName;
                tn->lo = orig(first);
                tn->hi = orig(last_ident - 1);
                prm->kids.push_back(std::move(tn));
                prm->kids.push_back(leaf(NodeKind::IdentifierUse, orig(last_ident)));
            } else if (first <= plast && pos_ > first) {
                auto tn = std::make_unique<Tmp>();
                tn->kind = NodeKind::TypeName;
                tn->lo = orig(first);
                tn->hi = orig(plast);
                prm->kids.push_back(std::move(tn));
            }
            if (pos_ == first) throw Fail{};  // no progress
            n->kids.push_back(std::move(prm));
            if (at(",")) eat();
        }
        n->hi = expect(")");
        return n;
    }
};

void flatten(const Tmp& t, int parent, std::vector<ParseNode>& out) {
    const int id = static_cast<int>(out.size());
    out.push_back({id, t.kind, t.lo, t.hi, {}, parent});
    for (const auto& k : t.kids) {
        out[id].children.push_back(static_cast<int>(out.size()));
        flatten(*k, id, out);
    }
}

}  // namespace

const char* node_kind_name(NodeKind k) {
    switch (k) {
        case NodeKind::FunctionDef: return "function_def";
        case NodeKind::ParamList: return "param_list";
        case NodeKind::Param: return "param";
        case NodeKind::TypeName: return "type_name";
        case NodeKind::Decl: return "decl";
        case NodeKind::Assign: return "assign";
        case NodeKind::ExprStmt: return "expr_stmt";
        case NodeKind::If: return "if";
        case NodeKind::While: return "while";
        case NodeKind::DoWhile: return "do_while";
        case NodeKind::For: return "for";
        case NodeKind::Return: return "return";
        case NodeKind::Break: return "break";
        case NodeKind::Continue: return "continue";
        case NodeKind::Block: return "block";
        case NodeKind::Call: return "call";
        case NodeKind::BinaryExpr: return "binary_expr";
        case NodeKind::UnaryExpr: return "unary_expr";
        case NodeKind::Ternary: return "ternary";
        case NodeKind::IndexExpr: return "index_expr";
        case NodeKind::IdentifierUse: return "identifier_use";
        case NodeKind::Literal: return "literal";
        case NodeKind::OperatorTok: return "operator_tok";
        case NodeKind::StmtOpaque: return "stmt_opaque";
    }
    return "?";
}

NodeKind node_kind_from_name(std::string_view name) {
    for (int k = 0; k <= static_cast<int>(NodeKind::StmtOpaque); ++k)
        if (name == node_kind_name(static_cast<NodeKind>(k))) return static_cast<NodeKind>(k);
    throw ParseError("unknown node kind: " + std::string(name));
}

std::vector<ParseNode> parse(const TokenStream& ts, bool strict) {
    if (ts.tokens.empty()) {
        if (strict) throw ParseError("empty token stream");
        return {};
    }
    Parser p(ts);
    std::vector<TmpPtr> roots = p.run();
    std::vector<ParseNode> out;
    for (const auto& r : roots) flatten(*r, -1, out);
    validate_forest(out);
    return out;
}

void validate_forest(const std::vector<ParseNode>& nodes) {
    for (std::size_t i = 0; i < nodes.size(); ++i) {
        const ParseNode& n = nodes[i];
        if (n.id != static_cast<int>(i))
            throw ParseError("node " + std::to_string(i) + ": id not in preorder position");
        if (n.tok_lo > n.tok_hi)
            throw ParseError("node " + std::to_string(i) + ": empty token range");
        for (int c : n.children) {
            if (c <= n.id || c >= static_cast<int>(nodes.size()))
                throw ParseError("node " + std::to_string(i) + ": bad child id " +
                                 std::to_string(c));
            const ParseNode& ch = nodes[c];
            if (ch.tok_lo < n.tok_lo || ch.tok_hi > n.tok_hi)
                throw ParseError("node " + std::to_string(c) +
                                 ": token range exceeds parent " + std::to_string(i));
        }
    }
}

std::string export_parse_tree(const std::vector<ParseNode>& nodes) {
    json arr = json::array();
    for (const ParseNode& n : nodes) {
        arr.push_back({{"id", n.id},
                       {"kind", node_kind_name(n.kind)},
                       {"token_range", {n.tok_lo, n.tok_hi}},
                       {"children", n.children}});
    }
    return json{{"nodes", arr}}.dump(2);
}

std::vector<ParseNode> import_parse_tree_json(const std::string& json_text) {
    json doc;
    try {
        doc = json::parse(json_text);
    } catch (const json::exception& e) {
        throw ParseError(std::string("parse-tree JSON: ") + e.what());
    }
    if (!doc.contains("nodes") || !doc["nodes"].is_array())
        throw ParseError("parse-tree JSON: missing \"nodes\" array");
    std::vector<ParseNode> out;
    for (std::size_t i = 0; i < doc["nodes"].size(); ++i) {
        const json& j = doc["nodes"][i];
        const std::string where = "nodes[" + std::to_string(i) + "]";
        for (const char* field : {"id", "kind", "token_range", "children"})
            if (!j.contains(field))
                throw ParseError("parse-tree JSON: " + where + " missing \"" + field + "\"");
        ParseNode n;
        n.id = j["id"].get<int>();
        n.kind = node_kind_from_name(j["kind"].get<std::string>());
        if (!j["token_range"].is_array() || j["token_range"].size() != 2)
            throw ParseError("parse-tree JSON: " + where + ".token_range must be [lo, hi]");
        n.tok_lo = j["token_range"][0].get<int>();
        n.tok_hi = j["token_range"][1].get<int>();
        n.children = j["children"].get<std::vector<int>>();
        out.push_back(std::move(n));
    }
    for (std::size_t i = 0; i < out.size(); ++i)
        for (int c : out[i].children)
            if (c >= 0 && c < static_cast<int>(out.size())) out[c].parent = static_cast<int>(i);
    validate_forest(out);
    return out;
}

std::vector<ParseNode> import_parse_tree(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ParseError("cannot open parse-tree file: " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return import_parse_tree_json(ss.str());
}

}  // namespace dvs

#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "dvs/lexer.hpp"

namespace dvs {

enum class NodeKind {
    FunctionDef,
    ParamList,
    Param,
    TypeName,
    Decl,
    Assign,
    ExprStmt,
    If,
    While,
    DoWhile,
    For,
    Return,
    Break,
    Continue,
    Block,
    Call,
    BinaryExpr,
    UnaryExpr,
    Ternary,
    IndexExpr,
    IdentifierUse,
    Literal,
    OperatorTok,
    StmtOpaque,
};

const char* node_kind_name(NodeKind k);
NodeKind node_kind_from_name(std::string_view name);

/// One node of the parse forest. Ids are a contiguous 0-based preorder
/// numbering; token_range is inclusive on both ends and contains every
/// child's range.
struct ParseNode {
    int id = 0;
    NodeKind kind = NodeKind::StmtOpaque;
    int tok_lo = 0;
    int tok_hi = 0;
    std::vector<int> children;
    int parent = -1;  // -1 for roots

    bool operator==(const ParseNode& o) const {
        return id == o.id && kind == o.kind && tok_lo == o.tok_lo && tok_hi == o.tok_hi &&
               children == o.children;
    }
};

struct ParseError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Recursive-descent parse of a C-subset token stream. Unparseable
/// statements degrade to StmtOpaque nodes; the only hard failure is an
/// empty stream with strict=true.
std::vector<ParseNode> parse(const TokenStream& ts, bool strict = false);

/// Checks preorder numbering, containment and parent links; throws on
/// violation. Used by both parse() and import paths.
void validate_forest(const std::vector<ParseNode>& nodes);

/// JSON round-trip for externally supplied parse trees
/// ({"nodes":[{id, kind, token_range, children}]}).
std::string export_parse_tree(const std::vector<ParseNode>& nodes);
std::vector<ParseNode> import_parse_tree_json(const std::string& json_text);
std::vector<ParseNode> import_parse_tree(const std::string& path);

}  // namespace dvs

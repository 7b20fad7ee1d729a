#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "dvs/matrix.hpp"
#include "dvs/parser.hpp"

namespace dvs {

enum class GraphKind { AST, CFG, DFG };

const char* graph_kind_name(GraphKind k);
GraphKind graph_kind_from_name(std::string_view name);

/// One directed adjacency matrix over parse nodes. M(i,j)=1 means edge i->j.
/// node_tokens maps each node to its inclusive token range.
struct CodeGraph {
    GraphKind kind = GraphKind::AST;
    int n = 0;
    std::vector<std::uint8_t> adj;  // n*n, row-major
    std::vector<std::pair<int, int>> node_tokens;

    std::uint8_t at(int i, int j) const { return adj[static_cast<std::size_t>(i) * n + j]; }
    void set(int i, int j) {
        if (i != j) adj[static_cast<std::size_t>(i) * n + j] = 1;  // never self-loops
    }
    std::vector<std::pair<int, int>> edges() const;
    bool operator==(const CodeGraph&) const = default;
};

/// AST, CFG and DFG over one shared node index space, plus the token stream
/// they are indexed against.
struct GraphBundle {
    CodeGraph ast, cfg, dfg;
    TokenStream tokens;
};

CodeGraph build_ast(const std::vector<ParseNode>& nodes);
CodeGraph build_cfg(const std::vector<ParseNode>& nodes);

/// Reaching-definitions def-use edges over the statement-level CFG.
/// Needs token texts to resolve variable names.
CodeGraph build_dfg(const std::vector<ParseNode>& nodes, const TokenStream& tokens);

/// Length-2 MetaPath rule: every directed edge gains its reverse,
/// M'(i,j) = M(i,j) | M(j,i). Symmetric and idempotent.
CodeGraph apply_metapath(const CodeGraph& g);

/// Expand node-level adjacency to an L x L token-level matrix:
/// S(a,b)=1 iff some edge i->j has token a in range(i) and b in range(j),
/// both below L. Rows/columns beyond L are dropped; output is exactly L x L.
Matrix node_adjacency_to_sequence_matrix(const CodeGraph& g, std::size_t l);

/// Full per-function extraction: tokenize, parse, build all three graphs.
GraphBundle extract_bundle(const std::string& source);
GraphBundle bundle_from_nodes(const std::vector<ParseNode>& nodes, TokenStream tokens);

std::string export_graph(const CodeGraph& g);
CodeGraph import_graph_json(const std::string& json_text);

std::string export_bundle(const GraphBundle& b);
GraphBundle import_bundle_json(const std::string& json_text);

}  // namespace dvs

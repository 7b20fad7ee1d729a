#include "dvs/graphs.hpp"

#include <map>
#include <set>
#include <unordered_map>
#include <unordered_set>

#include <json.hpp>

namespace dvs {

namespace {

using nlohmann::json;

CodeGraph empty_graph(GraphKind kind, const std::vector<ParseNode>& nodes) {
    CodeGraph g;
    g.kind = kind;
    g.n = static_cast<int>(nodes.size());
    g.adj.assign(static_cast<std::size_t>(g.n) * g.n, 0);
    g.node_tokens.reserve(nodes.size());
    for (const ParseNode& n : nodes) g.node_tokens.emplace_back(n.tok_lo, n.tok_hi);
    return g;
}

// ---- control flow ------------------------------------------------------

struct LoopCtx {
    int continue_target = -1;
    std::vector<int>* breaks = nullptr;
};

/// Walks statements computing (entry, exits) pairs and adding successor
/// edges. Blocks are transparent unless empty; if/while nodes double as
/// their own condition nodes.
class FlowBuilder {
public:
    FlowBuilder(const std::vector<ParseNode>& nodes, CodeGraph& g) : nodes_(nodes), g_(g) {}

    struct Flow {
        int entry = -1;
        std::vector<int> exits;
    };

    Flow statement(int id, LoopCtx ctx) {
        const ParseNode& n = nodes_[id];
        flow_nodes_.insert(id);
        switch (n.kind) {
            case NodeKind::Block: {
                if (n.children.empty()) return {id, {id}};
                flow_nodes_.erase(id);
                return sequence(n.children, ctx);
            }
            case NodeKind::FunctionDef: {
                flow_nodes_.erase(id);
                // last child is the body block
                return statement(n.children.back(), ctx);
            }
            case NodeKind::If: {
                Flow then = statement(n.children[1], ctx);
                g_.set(id, then.entry);
                Flow out{id, then.exits};
                if (n.children.size() >= 3) {
                    Flow els = statement(n.children[2], ctx);
                    g_.set(id, els.entry);
                    out.exits.insert(out.exits.end(), els.exits.begin(), els.exits.end());
                } else {
                    out.exits.push_back(id);  // fallthrough when condition is false
                }
                return out;
            }
            case NodeKind::While: {
                std::vector<int> breaks;
                Flow body = statement(n.children[1], {id, &breaks});
                g_.set(id, body.entry);
                for (int e : body.exits) g_.set(e, id);  // back edge
                std::vector<int> exits{id};
                exits.insert(exits.end(), breaks.begin(), breaks.end());
                return {id, exits};
            }
            case NodeKind::DoWhile: {
                const int cond = n.children[1];
                flow_nodes_.erase(id);
                flow_nodes_.insert(cond);
                std::vector<int> breaks;
                Flow body = statement(n.children[0], {cond, &breaks});
                for (int e : body.exits) g_.set(e, cond);
                g_.set(cond, body.entry);  // back edge
                std::vector<int> exits{cond};
                exits.insert(exits.end(), breaks.begin(), breaks.end());
                return {body.entry, exits};
            }
            case NodeKind::For: {
                // children: [init, cond, step, body]
                const int init = n.children[0];
                const int cond = n.children[1];
                const int step = n.children[2];
                flow_nodes_.erase(id);
                flow_nodes_.insert(init);
                flow_nodes_.insert(cond);
                flow_nodes_.insert(step);
                std::vector<int> breaks;
                Flow body = statement(n.children[3], {step, &breaks});
                g_.set(init, cond);
                g_.set(cond, body.entry);
                for (int e : body.exits) g_.set(e, step);
                g_.set(step, cond);
                std::vector<int> exits{cond};
                exits.insert(exits.end(), breaks.begin(), breaks.end());
                return {init, exits};
            }
            case NodeKind::Return:
                return {id, {}};
            case NodeKind::Break: {
                if (ctx.breaks) ctx.breaks->push_back(id);
                return {id, {}};
            }
            case NodeKind::Continue: {
                if (ctx.continue_target >= 0) g_.set(id, ctx.continue_target);
                return {id, {}};
            }
            default:
                // decl, assign, call, opaque and any other expression statement
                return {id, {id}};
        }
    }

    Flow sequence(const std::vector<int>& stmts, LoopCtx ctx) {
        Flow out;
        for (int id : stmts) {
            Flow f = statement(id, ctx);
            if (out.entry < 0) out.entry = f.entry;
            for (int e : out.exits) g_.set(e, f.entry);
            out.exits = std::move(f.exits);
        }
        return out;
    }

    const std::set<int>& flow_nodes() const { return flow_nodes_; }

private:
    const std::vector<ParseNode>& nodes_;
    CodeGraph& g_;
    std::set<int> flow_nodes_;
};

std::vector<int> roots_of(const std::vector<ParseNode>& nodes) {
    std::vector<int> roots;
    for (const ParseNode& n : nodes)
        if (n.parent < 0) roots.push_back(n.id);
    // imported forests may lack parent links; reconstruct from child sets
    if (roots.empty() && !nodes.empty()) {
        std::vector<bool> is_child(nodes.size(), false);
        for (const ParseNode& n : nodes)
            for (int c : n.children) is_child[c] = true;
        for (const ParseNode& n : nodes)
            if (!is_child[n.id]) roots.push_back(n.id);
    }
    return roots;
}

std::set<int> build_flow(const std::vector<ParseNode>& nodes, CodeGraph& g) {
    FlowBuilder fb(nodes, g);
    fb.sequence(roots_of(nodes), LoopCtx{});
    return fb.flow_nodes();
}

// ---- data flow ---------------------------------------------------------

struct UseDef {
    std::set<std::string> uses;
    std::set<std::string> defs;
    bool kills = true;  // opaque statements gen without killing
};

void collect_idents(const std::vector<ParseNode>& nodes, const TokenStream* ts, int id,
                    std::set<std::string>& out) {
    const ParseNode& n = nodes[id];
    if (n.kind == NodeKind::IdentifierUse && ts && n.tok_lo < static_cast<int>(ts->tokens.size()))
        out.insert(ts->tokens[n.tok_lo].text);
    for (int c : n.children) collect_idents(nodes, ts, c, out);
}

/// Identifiers inside a statement node's own scope: the condition for
/// if/while, everything for plain statements.
int scope_root(const std::vector<ParseNode>& nodes, int id) {
    const ParseNode& n = nodes[id];
    if ((n.kind == NodeKind::If || n.kind == NodeKind::While) && !n.children.empty())
        return n.children[0];
    return id;
}

UseDef use_def_of(const std::vector<ParseNode>& nodes, const TokenStream& ts, int id) {
    UseDef ud;
    const ParseNode& n = nodes[id];
    auto ident_text = [&](int nid) -> std::string {
        const ParseNode& m = nodes[nid];
        if (m.tok_lo < static_cast<int>(ts.tokens.size())) return ts.tokens[m.tok_lo].text;
        return {};
    };
    auto walk_expr = [&](auto&& self, int eid, bool lvalue) -> void {
        const ParseNode& e = nodes[eid];
        switch (e.kind) {
            case NodeKind::IdentifierUse: {
                std::string name = ident_text(eid);
                if (name.empty()) return;
                if (lvalue) {
                    ud.defs.insert(name);
                } else {
                    ud.uses.insert(name);
                }
                return;
            }
            case NodeKind::Assign: {
                const bool compound = e.children.size() >= 2 &&
                                      nodes[e.children[1]].kind == NodeKind::OperatorTok &&
                                      ts.tokens[nodes[e.children[1]].tok_lo].text != "=";
                const int lhs = e.children[0];
                if (nodes[lhs].kind == NodeKind::IdentifierUse) {
                    ud.defs.insert(ident_text(lhs));
                    if (compound) ud.uses.insert(ident_text(lhs));
                } else {
                    // *p = ..., a[i] = ..., s->f = ...: base identifiers are
                    // both read and conservatively written
                    std::set<std::string> ids;
                    collect_idents(nodes, &ts, lhs, ids);
                    for (const auto& v : ids) {
                        ud.defs.insert(v);
                        ud.uses.insert(v);
                    }
                    ud.kills = false;
                }
                if (e.children.size() >= 3) self(self, e.children[2], false);
                return;
            }
            case NodeKind::UnaryExpr: {
                // ++/-- modify their operand
                bool incdec = false;
                for (int c : e.children)
                    if (nodes[c].kind == NodeKind::OperatorTok) {
                        const std::string& t = ts.tokens[nodes[c].tok_lo].text;
                        incdec = incdec || t == "++" || t == "--";
                    }
                for (int c : e.children) {
                    if (nodes[c].kind == NodeKind::OperatorTok ||
                        nodes[c].kind == NodeKind::TypeName)
                        continue;
                    self(self, c, false);
                    if (incdec) {
                        std::set<std::string> ids;
                        collect_idents(nodes, &ts, c, ids);
                        for (const auto& v : ids) ud.defs.insert(v);
                    }
                }
                return;
            }
            default:
                for (int c : e.children) {
                    if (nodes[c].kind == NodeKind::OperatorTok ||
                        nodes[c].kind == NodeKind::TypeName)
                        continue;
                    self(self, c, false);
                }
                return;
        }
    };

    switch (n.kind) {
        case NodeKind::Decl: {
            // direct IdentifierUse children are declarators; nested
            // expressions are initializers or array sizes
            for (int c : n.children) {
                const ParseNode& ch = nodes[c];
                if (ch.kind == NodeKind::IdentifierUse) ud.defs.insert(ident_text(c));
                else if (ch.kind != NodeKind::TypeName && ch.kind != NodeKind::OperatorTok)
                    walk_expr(walk_expr, c, false);
            }
            break;
        }
        case NodeKind::Param: {
            for (int c : n.children)
                if (nodes[c].kind == NodeKind::IdentifierUse) ud.defs.insert(ident_text(c));
            break;
        }
        case NodeKind::StmtOpaque: {
            // flow-insensitive fallback: every identifier is use and def
            for (int t = n.tok_lo; t <= n.tok_hi && t < static_cast<int>(ts.tokens.size()); ++t) {
                if (ts.tokens[t].kind == TokenKind::Identifier) {
                    ud.uses.insert(ts.tokens[t].text);
                    ud.defs.insert(ts.tokens[t].text);
                }
            }
            ud.kills = false;
            break;
        }
        default:
            walk_expr(walk_expr, scope_root(nodes, id), false);
            break;
    }
    return ud;
}

std::vector<int> param_nodes(const std::vector<ParseNode>& nodes) {
    std::vector<int> out;
    for (const ParseNode& n : nodes)
        if (n.kind == NodeKind::Param) out.push_back(n.id);
    return out;
}

}  // namespace

const char* graph_kind_name(GraphKind k) {
    switch (k) {
        case GraphKind::AST: return "AST";
        case GraphKind::CFG: return "CFG";
        case GraphKind::DFG: return "DFG";
    }
    return "?";
}

GraphKind graph_kind_from_name(std::string_view name) {
    if (name == "AST") return GraphKind::AST;
    if (name == "CFG") return GraphKind::CFG;
    if (name == "DFG") return GraphKind::DFG;
    throw ParseError("unknown graph kind: " + std::string(name));
}

std::vector<std::pair<int, int>> CodeGraph::edges() const {
    std::vector<std::pair<int, int>> out;
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j)
            if (at(i, j)) out.emplace_back(i, j);
    return out;
}

CodeGraph build_ast(const std::vector<ParseNode>& nodes) {
    CodeGraph g = empty_graph(GraphKind::AST, nodes);
    for (const ParseNode& n : nodes)
        for (int c : n.children) g.set(n.id, c);
    return g;
}

CodeGraph build_cfg(const std::vector<ParseNode>& nodes) {
    CodeGraph g = empty_graph(GraphKind::CFG, nodes);
    build_flow(nodes, g);
    return g;
}

CodeGraph build_dfg(const std::vector<ParseNode>& nodes, const TokenStream& ts) {
    CodeGraph g = empty_graph(GraphKind::DFG, nodes);
    CodeGraph cfg = empty_graph(GraphKind::CFG, nodes);
    std::set<int> flow = build_flow(nodes, cfg);

    // Parameters feed the function entry: chain them ahead of the first
    // statement so their definitions reach the body.
    std::vector<int> order(flow.begin(), flow.end());
    std::vector<int> params = param_nodes(nodes);
    std::vector<std::vector<int>> preds(nodes.size());
    for (int i = 0; i < cfg.n; ++i)
        for (int j = 0; j < cfg.n; ++j)
            if (cfg.at(i, j)) preds[j].push_back(i);
    // entry statements: flow nodes with no predecessors get the last param
    // as a virtual predecessor
    if (!params.empty()) {
        for (std::size_t i = 0; i + 1 < params.size(); ++i)
            preds[params[i + 1]].push_back(params[i]);
        for (int f : flow)
            if (preds[f].empty()) preds[f].push_back(params.back());
        for (int p : params) order.push_back(p);
    }

    std::map<int, UseDef> ud;
    for (int f : order) ud[f] = use_def_of(nodes, ts, f);

    // reaching definitions: IN/OUT as sets of (var, def-node)
    using DefSet = std::set<std::pair<std::string, int>>;
    std::map<int, DefSet> out_sets;
    bool changed = true;
    while (changed) {
        changed = false;
        for (int f : order) {
            DefSet in;
            for (int p : preds[f]) {
                const DefSet& po = out_sets[p];
                in.insert(po.begin(), po.end());
            }
            DefSet out;
            for (const auto& d : in) {
                if (ud[f].kills && ud[f].defs.count(d.first)) continue;
                out.insert(d);
            }
            for (const auto& v : ud[f].defs) out.insert({v, f});
            if (out != out_sets[f]) {
                out_sets[f] = std::move(out);
                changed = true;
            }
            // def-use edges come from IN: definitions reaching this node
            for (const auto& v : ud[f].uses)
                for (const auto& d : in)
                    if (d.first == v) g.set(d.second, f);
        }
    }
    return g;
}

CodeGraph apply_metapath(const CodeGraph& g) {
    CodeGraph out = g;
    for (int i = 0; i < g.n; ++i)
        for (int j = 0; j < g.n; ++j)
            if (g.at(i, j)) out.set(j, i);
    return out;
}

Matrix node_adjacency_to_sequence_matrix(const CodeGraph& g, std::size_t l) {
    Matrix s(l, l);
    const int li = static_cast<int>(l);
    for (int i = 0; i < g.n; ++i) {
        for (int j = 0; j < g.n; ++j) {
            if (!g.at(i, j)) continue;
            const auto [alo, ahi] = g.node_tokens[i];
            const auto [blo, bhi] = g.node_tokens[j];
            for (int a = alo; a <= ahi && a < li; ++a)
                for (int b = blo; b <= bhi && b < li; ++b)
                    if (a >= 0 && b >= 0) s(a, b) = 1.0;
        }
    }
    return s;
}

GraphBundle bundle_from_nodes(const std::vector<ParseNode>& nodes, TokenStream tokens) {
    GraphBundle b;
    b.ast = build_ast(nodes);
    b.cfg = build_cfg(nodes);
    b.dfg = build_dfg(nodes, tokens);
    b.tokens = std::move(tokens);
    return b;
}

GraphBundle extract_bundle(const std::string& source) {
    TokenStream ts = tokenize(source);
    std::vector<ParseNode> nodes = parse(ts);
    return bundle_from_nodes(nodes, std::move(ts));
}

// ---- JSON --------------------------------------------------------------

std::string export_graph(const CodeGraph& g) {
    json j;
    j["kind"] = graph_kind_name(g.kind);
    j["n"] = g.n;
    json edges = json::array();
    for (auto [a, b] : g.edges()) edges.push_back({a, b});
    j["edges"] = edges;
    json nt = json::array();
    for (auto [lo, hi] : g.node_tokens) nt.push_back({lo, hi});
    j["node_tokens"] = nt;
    return j.dump();
}

static CodeGraph graph_from_json(const json& j) {
    CodeGraph g;
    g.kind = graph_kind_from_name(j.at("kind").get<std::string>());
    g.n = j.at("n").get<int>();
    g.adj.assign(static_cast<std::size_t>(g.n) * g.n, 0);
    for (const auto& e : j.at("edges")) {
        const int a = e.at(0).get<int>(), b = e.at(1).get<int>();
        if (a < 0 || a >= g.n || b < 0 || b >= g.n)
            throw ParseError("graph JSON: edge endpoint out of range");
        g.set(a, b);
    }
    for (const auto& r : j.at("node_tokens"))
        g.node_tokens.emplace_back(r.at(0).get<int>(), r.at(1).get<int>());
    if (static_cast<int>(g.node_tokens.size()) != g.n)
        throw ParseError("graph JSON: node_tokens length != n");
    return g;
}

CodeGraph import_graph_json(const std::string& json_text) {
    try {
        return graph_from_json(json::parse(json_text));
    } catch (const json::exception& e) {
        throw ParseError(std::string("graph JSON: ") + e.what());
    }
}

std::string export_bundle(const GraphBundle& b) {
    json j;
    j["ast"] = json::parse(export_graph(b.ast));
    j["cfg"] = json::parse(export_graph(b.cfg));
    j["dfg"] = json::parse(export_graph(b.dfg));
    json toks = json::array();
    for (const Token& t : b.tokens.tokens)
        toks.push_back({{"text", t.text},
                        {"kind", token_kind_name(t.kind)},
                        {"span", {t.byte_start, t.byte_end}}});
    j["tokens"] = {{"tokens", toks},
                   {"truncated", b.tokens.truncated},
                   {"original_length", b.tokens.original_length}};
    return j.dump();
}

GraphBundle import_bundle_json(const std::string& json_text) {
    json j;
    try {
        j = json::parse(json_text);
    } catch (const json::exception& e) {
        throw ParseError(std::string("bundle JSON: ") + e.what());
    }
    GraphBundle b;
    b.ast = graph_from_json(j.at("ast"));
    b.cfg = graph_from_json(j.at("cfg"));
    b.dfg = graph_from_json(j.at("dfg"));
    const json& ts = j.at("tokens");
    for (const auto& t : ts.at("tokens")) {
        Token tok;
        tok.text = t.at("text").get<std::string>();
        tok.kind = token_kind_from_name(t.at("kind").get<std::string>());
        tok.byte_start = t.at("span").at(0).get<std::size_t>();
        tok.byte_end = t.at("span").at(1).get<std::size_t>();
        b.tokens.tokens.push_back(std::move(tok));
    }
    b.tokens.truncated = ts.at("truncated").get<bool>();
    b.tokens.original_length = ts.at("original_length").get<std::size_t>();
    if (b.ast.n != b.cfg.n || b.ast.n != b.dfg.n)
        throw ParseError("bundle JSON: graphs disagree on node count");
    return b;
}

}  // namespace dvs

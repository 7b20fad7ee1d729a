#include <doctest.h>

#include <string>
#include <vector>

#include "dvs/lexer.hpp"
#include "dvs/parser.hpp"

using namespace dvs;

namespace {

std::vector<ParseNode> parse_src(const std::string& src) { return parse(tokenize(src)); }

}  // namespace

TEST_CASE("declaration structure") {
    auto nodes = parse_src("int count = 1;");
    REQUIRE(nodes.size() == 5);
    CHECK(nodes[0].kind == NodeKind::Decl);
    CHECK(nodes[0].tok_lo == 0);
    CHECK(nodes[0].tok_hi == 4);  // includes the ';'
    REQUIRE(nodes[0].children == std::vector<int>{1, 2, 3, 4});
    CHECK(nodes[1].kind == NodeKind::TypeName);
    CHECK(nodes[2].kind == NodeKind::IdentifierUse);
    CHECK(nodes[2].tok_lo == 1);
    CHECK(nodes[2].tok_hi == 1);
    CHECK(nodes[3].kind == NodeKind::OperatorTok);
    CHECK(nodes[4].kind == NodeKind::Literal);
}

TEST_CASE("if with block body") {
    auto nodes = parse_src("if (x > 0) { y = 1; }");
    REQUIRE(nodes.size() == 10);
    CHECK(nodes[0].kind == NodeKind::If);
    CHECK(nodes[0].tok_lo == 0);
    CHECK(nodes[0].tok_hi == 11);
    REQUIRE(nodes[0].children == std::vector<int>{1, 5});
    CHECK(nodes[1].kind == NodeKind::BinaryExpr);  // x > 0
    CHECK(nodes[1].tok_lo == 2);
    CHECK(nodes[1].tok_hi == 4);
    CHECK(nodes[5].kind == NodeKind::Block);
    REQUIRE(nodes[5].children == std::vector<int>{6});
    CHECK(nodes[6].kind == NodeKind::Assign);
    CHECK(nodes[6].children.size() == 3);
}

TEST_CASE("function definition structure") {
    auto nodes = parse_src("int f(int a) { return a; }");
    REQUIRE(nodes.size() == 10);
    CHECK(nodes[0].kind == NodeKind::FunctionDef);
    REQUIRE(nodes[0].children == std::vector<int>{1, 2, 3, 7});
    CHECK(nodes[1].kind == NodeKind::TypeName);
    CHECK(nodes[2].kind == NodeKind::IdentifierUse);  // f
    CHECK(nodes[3].kind == NodeKind::ParamList);
    REQUIRE(nodes[3].children == std::vector<int>{4});
    CHECK(nodes[4].kind == NodeKind::Param);
    CHECK(nodes[7].kind == NodeKind::Block);
    REQUIRE(nodes[7].children == std::vector<int>{8});
    CHECK(nodes[8].kind == NodeKind::Return);
    CHECK(nodes[9].kind == NodeKind::IdentifierUse);  // a
}

TEST_CASE("for loop always has four children plus body markers") {
    auto nodes = parse_src("for (;;) x++;");
    CHECK(nodes[0].kind == NodeKind::For);
    REQUIRE(nodes[0].children.size() == 4);
    CHECK(nodes[nodes[0].children[0]].kind == NodeKind::StmtOpaque);
    CHECK(nodes[nodes[0].children[1]].kind == NodeKind::StmtOpaque);
    CHECK(nodes[nodes[0].children[2]].kind == NodeKind::StmtOpaque);
    CHECK(nodes[nodes[0].children[3]].kind == NodeKind::UnaryExpr);

    auto full = parse_src("for (int i = 0; i < n; i++) { s += i; }");
    CHECK(full[0].kind == NodeKind::For);
    REQUIRE(full[0].children.size() == 4);
    CHECK(full[full[0].children[0]].kind == NodeKind::Decl);
    CHECK(full[full[0].children[1]].kind == NodeKind::BinaryExpr);
    CHECK(full[full[0].children[2]].kind == NodeKind::UnaryExpr);
    CHECK(full[full[0].children[3]].kind == NodeKind::Block);
}

TEST_CASE("garbage degrades to an opaque statement") {
    auto nodes = parse_src("@@garbage@@;");
    REQUIRE(nodes.size() == 1);
    CHECK(nodes[0].kind == NodeKind::StmtOpaque);
    CHECK(nodes[0].tok_lo == 0);
    CHECK(nodes[0].tok_hi == 5);  // ends at the ';'
}

TEST_CASE("opaque statements never swallow the enclosing block") {
    auto nodes = parse_src("{ @@ %% $$ }");
    CHECK(nodes[0].kind == NodeKind::Block);
    REQUIRE(nodes[0].children.size() == 1);
    CHECK(nodes[nodes[0].children[0]].kind == NodeKind::StmtOpaque);
}

TEST_CASE("preprocessor tokens stay in the index space but outside the grammar") {
    auto ts = tokenize("#define X 1\nint y;");
    REQUIRE(ts.tokens.size() == 4);
    auto nodes = parse(ts);
    CHECK(nodes[0].kind == NodeKind::Decl);
    CHECK(nodes[0].tok_lo == 1);  // token 0 is the directive
    CHECK(nodes[0].tok_hi == 3);
}

TEST_CASE("empty stream") {
    CHECK(parse(tokenize("")).empty());
    CHECK_THROWS_AS(parse(tokenize(""), true), ParseError);
}

TEST_CASE("operator precedence and associativity") {
    // a + b * c: '+' at the root, '*' nested under its right operand
    auto nodes = parse_src("a + b * c;");
    CHECK(nodes[0].kind == NodeKind::BinaryExpr);
    const ParseNode& plus_op = nodes[nodes[0].children[1]];
    CHECK(plus_op.kind == NodeKind::OperatorTok);
    CHECK(plus_op.tok_lo == 1);  // '+'
    CHECK(nodes[nodes[0].children[2]].kind == NodeKind::BinaryExpr);

    // right-associative assignment: a = b = c
    auto asg = parse_src("a = b = c;");
    CHECK(asg[0].kind == NodeKind::Assign);
    CHECK(asg[asg[0].children[2]].kind == NodeKind::Assign);
}

TEST_CASE("preorder ids, parent links and containment hold on real code") {
    const std::string src =
        "static int ff_insert_inpad(void *s, unsigned n) {\n"
        "  int ret = 0;\n"
        "  if (!s) return -1;\n"
        "  while (n-- > 0) { ret += helper(s, n); }\n"
        "  do { ret--; } while (ret > 10);\n"
        "  return ret ? ret : n;\n"
        "}\n";
    auto nodes = parse_src(src);
    REQUIRE(!nodes.empty());
    validate_forest(nodes);  // throws on violation
    for (std::size_t i = 0; i < nodes.size(); ++i) {
        CHECK(nodes[i].id == static_cast<int>(i));
        for (int c : nodes[i].children) {
            CHECK(c > nodes[i].id);
            CHECK(nodes[c].parent == nodes[i].id);
            CHECK(nodes[c].tok_lo >= nodes[i].tok_lo);
            CHECK(nodes[c].tok_hi <= nodes[i].tok_hi);
        }
    }
}

TEST_CASE("export/import round-trip") {
    auto nodes = parse_src("int f(int a, int b) { if (a) return b; return a + b; }");
    auto back = import_parse_tree_json(export_parse_tree(nodes));
    REQUIRE(back.size() == nodes.size());
    for (std::size_t i = 0; i < nodes.size(); ++i) CHECK(back[i] == nodes[i]);
}

TEST_CASE("import rejects malformed trees") {
    CHECK_THROWS_AS(import_parse_tree_json("not json"), ParseError);
    CHECK_THROWS_AS(import_parse_tree_json("{}"), ParseError);
    // child range exceeds parent
    const char* bad = R"({"nodes":[
      {"id":0,"kind":"block","token_range":[0,3],"children":[1]},
      {"id":1,"kind":"literal","token_range":[2,9],"children":[]}]})";
    CHECK_THROWS_AS(import_parse_tree_json(bad), ParseError);
    // ids out of preorder
    const char* bad_ids = R"({"nodes":[
      {"id":1,"kind":"block","token_range":[0,3],"children":[]}]})";
    CHECK_THROWS_AS(import_parse_tree_json(bad_ids), ParseError);
    // child id not after parent
    const char* bad_child = R"({"nodes":[
      {"id":0,"kind":"block","token_range":[0,3],"children":[0]}]})";
    CHECK_THROWS_AS(import_parse_tree_json(bad_child), ParseError);
}

TEST_CASE("node kind names round-trip") {
    for (int k = 0; k <= static_cast<int>(NodeKind::StmtOpaque); ++k) {
        const auto kind = static_cast<NodeKind>(k);
        CHECK(node_kind_from_name(node_kind_name(kind)) == kind);
    }
    CHECK_THROWS_AS(node_kind_from_name("nope"), ParseError);
}

#include <random>

#include <gtest/gtest.h>

#include "hpn/edit_script.hpp"
#include "hpn/fixtures.hpp"

using namespace hpn;

namespace {

EditState fixture_state() {
    HierarchyConfig c;
    c.max_resolution_exponent = 4;
    EditState s;
    s.mesh = fixtures::icosphere(3);
    s.hierarchy = build_hierarchy(s.mesh, c);
    s.model = init_texture_model(TextureConfig{}, level_sizes(s.hierarchy), 2);
    return s;
}

bool same(const EditState& a, const EditState& b) {
    return a.mesh == b.mesh && a.hierarchy == b.hierarchy && a.model == b.model;
}

}  // namespace

TEST(EditScript, ParsesBothForms) {
    const auto s = parse_edit_script(
        "# header\n"
        "\n"
        "drag 3 0 0.1 -0.2 3e-1 1.0 subtree\n"
        "  transfer 2 1 2 3 -> 7 8 4   # trailing comment\n"
        "drag 1 12 0 0 0 0.5 global\n");
    ASSERT_EQ(s.size(), 3u);
    EXPECT_EQ(s[0].line, 3u);
    EXPECT_EQ(s[1].line, 4u);
    const auto& d = std::get<DragEdit>(s[0].command);
    EXPECT_EQ(d.level, 3);
    EXPECT_EQ(d.point_index, 0u);
    EXPECT_EQ(d.displacement, Vec3(0.1, -0.2, 0.3));
    EXPECT_EQ(d.tau, 1.0);
    EXPECT_EQ(d.scope, EditScope::subtree);
    const auto& t = std::get<TransferEdit>(s[1].command);
    EXPECT_EQ(t.level, 2);
    EXPECT_EQ(t.source, (std::vector<std::uint32_t>{1, 2, 3}));
    EXPECT_EQ(t.target, (std::vector<std::uint32_t>{7, 8}));
    EXPECT_EQ(t.k_neighbors, 4);
    EXPECT_FALSE(t.transform);
    EXPECT_EQ(std::get<DragEdit>(s[2].command).scope, EditScope::global);
}

TEST(EditScript, FormatRoundTripsExactly) {
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> u(-1, 1);
    std::vector<EditCommand> cmds;
    for (int i = 0; i < 200; ++i) {
        if (i % 3) {
            DragEdit d;
            d.level = 1 + i % 3;
            d.point_index = static_cast<std::uint32_t>(rng() % 1000);
            d.displacement = Vec3(u(rng), u(rng) * 1e-7, u(rng) * 1e5);
            d.tau = std::abs(u(rng)) + 1e-3;
            d.scope = i % 2 ? EditScope::global : EditScope::subtree;
            cmds.push_back(d);
        } else {
            TransferEdit t;
            t.level = 2;
            t.source = {static_cast<std::uint32_t>(i), 5u};
            t.target = {9u};
            t.k_neighbors = 1 + i % 5;
            cmds.push_back(t);
        }
    }
    const auto text = format_edit_script(cmds);
    const auto back = parse_edit_script(text);
    ASSERT_EQ(back.size(), cmds.size());
    for (std::size_t i = 0; i < cmds.size(); ++i) EXPECT_EQ(back[i].command, cmds[i]) << format_edit(cmds[i]);
    std::vector<EditCommand> again;
    for (const auto& s : back) again.push_back(s.command);
    EXPECT_EQ(format_edit_script(again), text);
}

TEST(EditScript, ErrorsNameTheLine) {
    const char* bad[] = {
        "drag 1 2 3\n",
        "drag 1 2 0 0 0 1 sideways\n",
        "drag 1 2 0 0 0 0 subtree\n",
        "drag 1 2 0 0 x 1 subtree\n",
        "drag 0 2 0 0 0 1 subtree\n",
        "drag 1 -2 0 0 0 1 subtree\n",
        "transfer 1 2 3 4\n",
        "transfer 1 -> 3 4\n",
        "transfer 1 2 -> 3\n",
        "transfer 1 2 -> 3 0\n",
        "scale 1 2\n",
    };
    for (const char* line : bad) {
        const std::string text = std::string("# ok\ndrag 1 0 0 0 0 1 subtree\n") + line;
        try {
            parse_edit_script(text);
            ADD_FAILURE() << "accepted: " << line;
        } catch (const ParseError& e) {
            EXPECT_EQ(e.line(), 3u) << line;
            EXPECT_NE(std::string(e.what()).find("line 3"), std::string::npos);
        }
    }
}

TEST(EditScript, EmptyScriptAndZeroDragAreIdentity) {
    const auto s = fixture_state();
    EXPECT_TRUE(same(replay(s, parse_edit_script("")), s));
    EXPECT_TRUE(same(replay(s, parse_edit_script("# nothing\n\n")), s));
    EXPECT_TRUE(same(replay(s, parse_edit_script("drag 3 0 0 0 0 1.0 subtree\n")), s));
}

TEST(EditScript, ReplayMatchesDirectCalls) {
    const auto s = fixture_state();
    const std::string text =
        "transfer 3 0 1 2 3 -> 10 11 12 2\n"
        "drag 3 1 0 0 0.3 1 subtree\n"
        "drag 1 40 0.05 0 0 0.5 global\n"
        "transfer 1 0 1 2 3 4 5 -> 100 101 102 4\n";
    const auto got = replay(s, parse_edit_script(text));

    TransferEdit t1;
    t1.level = 3;
    t1.source = {0, 1, 2, 3};
    t1.target = {10, 11, 12};
    t1.k_neighbors = 2;
    auto model = transfer_features(s.model, s.hierarchy, t1);
    auto g = apply_edit(s.mesh, s.hierarchy, DragEdit{3, 1, Vec3(0, 0, 0.3)});
    g = apply_edit(g.mesh, g.hierarchy, DragEdit{1, 40, Vec3(0.05, 0, 0), 0.5, EditScope::global});
    TransferEdit t2;
    t2.level = 1;
    t2.source = {0, 1, 2, 3, 4, 5};
    t2.target = {100, 101, 102};
    model = transfer_features(model, g.hierarchy, t2);
    EXPECT_TRUE(same(got, EditState{g.mesh, g.hierarchy, model}));
}

TEST(EditScript, EngineErrorsCarryTheLine) {
    const auto s = fixture_state();
    try {
        replay(s, parse_edit_script("drag 1 0 0 0 0.1 1 subtree\n\ndrag 2 0 0 0 0.1 1 subtree\n"));
        FAIL();
    } catch (const StaleHierarchyError& e) {
        EXPECT_NE(std::string(e.what()).find("line 3"), std::string::npos);
    }
    try {
        replay(s, parse_edit_script("drag 1 99999 0 0 0.1 1 subtree\n"));
        FAIL();
    } catch (const ValidationError& e) {
        EXPECT_NE(std::string(e.what()).find("line 1"), std::string::npos);
    }
}

#include <cmath>
#include <filesystem>
#include <random>

#include <gtest/gtest.h>

#include "hpn/chamfer.hpp"
#include "hpn/fixtures.hpp"
#include "hpn/mesh.hpp"
#include "hpn/mesh_io.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

using namespace hpn;

namespace {

Mesh box(const Vec3& lo, const Vec3& hi) {
    Mesh m;
    for (int i = 0; i < 8; ++i)
        m.vertices.emplace_back(i & 1 ? hi.x() : lo.x(), i & 2 ? hi.y() : lo.y(), i & 4 ? hi.z() : lo.z());
    m.faces = {{0, 2, 1}, {1, 2, 3}, {4, 5, 6}, {5, 7, 6}, {0, 1, 4}, {1, 5, 4},
               {2, 6, 3}, {3, 6, 7}, {0, 4, 2}, {2, 4, 6}, {1, 3, 5}, {3, 7, 5}};
    return m;
}

}  // namespace

// --- load / save ------------------------------------------------------------

TEST(MeshIo, SingleTriangleObj) {
    auto m = parse_obj("v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 3\n");
    EXPECT_EQ(m.vertex_count(), 3u);
    EXPECT_EQ(m.face_count(), 1u);
    EXPECT_FALSE(m.has_colors());
}

TEST(MeshIo, ObjVertexColors) {
    auto m = parse_obj("v 0 0 0 1 0 0\nv 1 0 0 0 1 0\nv 0 1 0 0 0 1\nf 1 2 3\n");
    ASSERT_TRUE(m.has_colors());
    EXPECT_EQ((*m.colors)[1], Vec3(0, 1, 0));
}

TEST(MeshIo, ObjFaceIndexOutOfRangeNamesFace) {
    try {
        parse_obj("v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 5\n");
        FAIL() << "expected IndexError";
    } catch (const IndexError& e) {
        EXPECT_EQ(e.face(), 0u);
        EXPECT_NE(std::string(e.what()).find("face 0"), std::string::npos);
    }
}

TEST(MeshIo, ObjParseErrorCarriesLine) {
    try {
        parse_obj("v 0 0 0\nv 1 0 zero\n");
        FAIL() << "expected ParseError";
    } catch (const ParseError& e) {
        EXPECT_EQ(e.line(), 2u);
    }
}

TEST(MeshIo, ObjPolygonsAndSlashForms) {
    auto m = parse_obj("v 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\nvt 0 0\nf 1/1 2/1 3/1 -1/1\n");
    EXPECT_EQ(m.face_count(), 2u);
    EXPECT_EQ(m.faces[1], (Face{0, 2, 3}));
}

TEST(MeshIo, PlyUcharColorsNormalized) {
    const std::string ply =
        "ply\nformat ascii 1.0\nelement vertex 3\nproperty float x\nproperty float y\nproperty float z\n"
        "property uchar red\nproperty uchar green\nproperty uchar blue\nelement face 1\n"
        "property list uchar int vertex_indices\nend_header\n"
        "0 0 0 255 0 0\n1 0 0 0 255 0\n0 1 0 0 0 51\n3 0 1 2\n";
    auto m = parse_ply(ply);
    ASSERT_TRUE(m.has_colors());
    EXPECT_DOUBLE_EQ((*m.colors)[0].x(), 1.0);
    EXPECT_DOUBLE_EQ((*m.colors)[2].z(), 0.2);
}

TEST(MeshIo, PlyFaceIndexOutOfRange) {
    const std::string ply =
        "ply\nformat ascii 1.0\nelement vertex 3\nproperty float x\nproperty float y\nproperty float z\n"
        "element face 2\nproperty list uchar int vertex_indices\nend_header\n"
        "0 0 0\n1 0 0\n0 1 0\n3 0 1 2\n3 0 1 7\n";
    try {
        parse_ply(ply);
        FAIL();
    } catch (const IndexError& e) {
        EXPECT_EQ(e.face(), 1u);
    }
}

TEST(MeshIo, RoundTripAllFormats) {
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> u(-3.0, 3.0), c(0.0, 1.0);
    Mesh m = fixtures::torus(6, 5);
    for (auto& v : m.vertices) v += Vec3(u(rng), u(rng), u(rng)) * 1e-3;
    for (auto& col : *m.colors) col = Vec3(c(rng), c(rng), c(rng));
    m.normals = compute_vertex_normals(m);

    auto obj = parse_obj(format_obj(m));
    EXPECT_EQ(obj.vertices, m.vertices);
    EXPECT_EQ(obj.faces, m.faces);
    EXPECT_EQ(*obj.colors, *m.colors);
    for (bool binary : {false, true}) {
        auto ply = parse_ply(format_ply(m, binary));
        EXPECT_EQ(ply.vertices, m.vertices);
        EXPECT_EQ(ply.faces, m.faces);
        EXPECT_EQ(*ply.colors, *m.colors);
        EXPECT_EQ(ply, m);  // unit normals come back bit-exact too
    }
}

TEST(MeshIo, FileRoundTripAndMissingFile) {
    test::TempDir dir;
    auto m = fixtures::cube(2);
    save_mesh(m, dir.path() / "cube.ply");
    save_mesh(m, dir.path() / "cube.obj");
    EXPECT_EQ(load_mesh(dir.path() / "cube.ply").vertices, m.vertices);
    EXPECT_EQ(load_mesh(dir.path() / "cube.obj").faces, m.faces);
    EXPECT_THROW(load_mesh(dir.path() / "nope.obj"), IoError);
}

// --- normalization ------------------------------------------------------------

TEST(Normalize, UnitCubeSpansHalfExtent) {
    auto [m, xf] = normalize_to_cube(box(Vec3::Zero(), Vec3::Ones()));
    auto bb = bounding_box(m.vertices);
    for (int a = 0; a < 3; ++a) {
        EXPECT_NEAR(bb.min[a], -0.9, 1e-12);
        EXPECT_NEAR(bb.max[a], 0.9, 1e-12);
    }
}

TEST(Normalize, NonCubicBoxUsesUniformScale) {
    auto [m, xf] = normalize_to_cube(box(Vec3::Zero(), Vec3(2, 1, 1)));
    auto bb = bounding_box(m.vertices);
    EXPECT_NEAR(bb.min.x(), -0.9, 1e-12);
    EXPECT_NEAR(bb.max.x(), 0.9, 1e-12);
    EXPECT_NEAR(bb.min.y(), -0.45, 1e-12);
    EXPECT_NEAR(bb.max.y(), 0.45, 1e-12);
    EXPECT_NEAR(bb.max.z(), 0.45, 1e-12);
}

TEST(Normalize, IdempotentAndScaleEquivariant) {
    auto base = fixtures::torus(12, 8);
    for (auto& v : base.vertices) v += Vec3(3.0, -1.0, 0.5);
    auto [once, xf1] = normalize_to_cube(base);
    auto [twice, xf2] = normalize_to_cube(once);
    for (std::size_t i = 0; i < once.vertices.size(); ++i)
        EXPECT_LT((once.vertices[i] - twice.vertices[i]).cwiseAbs().maxCoeff(), 1e-9);
    for (double s : {0.01, 7.5, 1e3}) {
        Mesh scaled = base;
        for (auto& v : scaled.vertices) v *= s;
        auto [out, xf] = normalize_to_cube(scaled);
        for (std::size_t i = 0; i < once.vertices.size(); ++i)
            EXPECT_LT((out.vertices[i] - once.vertices[i]).cwiseAbs().maxCoeff(), 1e-9);
    }
}

TEST(Normalize, TransformIsInvertible) {
    auto base = fixtures::icosphere(1);
    for (auto& v : base.vertices) v = 4.0 * v + Vec3(10, 20, -5);
    auto [m, xf] = normalize_to_cube(base);
    for (std::size_t i = 0; i < base.vertices.size(); ++i) {
        EXPECT_LT((xf.inverse(xf.forward(base.vertices[i])) - base.vertices[i]).cwiseAbs().maxCoeff(), 1e-9);
        EXPECT_LE(m.vertices[i].cwiseAbs().maxCoeff(), 0.9);
    }
}

TEST(Normalize, DegenerateMeshRejected) {
    Mesh m;
    m.vertices = {Vec3(1, 1, 1), Vec3(1, 1, 1)};
    EXPECT_THROW(normalize_to_cube(m), NumericError);
    EXPECT_THROW(normalize_to_cube(Mesh{}), ValidationError);
}

// --- normals -------------------------------------------------------------------

TEST(Normals, FlatSquare) {
    Mesh m;
    m.vertices = {{0, 0, 0}, {1, 0, 0}, {1, 1, 0}, {0, 1, 0}};
    m.faces = {{0, 1, 2}, {0, 2, 3}};
    for (const auto& n : compute_vertex_normals(m)) EXPECT_LT((n - Vec3::UnitZ()).norm(), 1e-15);
}

TEST(Normals, TriangleFacingPlusX) {
    Mesh m;
    m.vertices = {{0, 0, 0}, {0, 1, 0}, {0, 0, 1}};
    m.faces = {{0, 1, 2}};
    for (const auto& n : compute_vertex_normals(m)) EXPECT_LT((n - Vec3::UnitX()).norm(), 1e-15);
}

TEST(Normals, IcosphereRadial) {
    auto m = fixtures::icosphere(3);
    auto normals = compute_vertex_normals(m);
    const double cos5 = std::cos(5.0 * M_PI / 180.0);
    for (std::size_t i = 0; i < m.vertices.size(); ++i)
        EXPECT_GT(normals[i].dot(m.vertices[i].normalized()), cos5);
}

TEST(Normals, IsolatedVertexAndDegenerateFace) {
    Mesh m;
    m.vertices = {{0, 0, 0}, {1, 0, 0}, {0, 1, 0}, {5, 5, 5}, {2, 0, 0}};
    m.faces = {{0, 1, 2}, {0, 1, 4}};  // second face has zero area
    auto n = compute_vertex_normals(m);
    EXPECT_EQ(n[3], Vec3::UnitZ());
    EXPECT_LT((n[4] - Vec3::UnitZ()).norm(), 1e-15);  // only touched by the zero-area face
    EXPECT_LT((n[0] - Vec3::UnitZ()).norm(), 1e-15);
}

TEST(Normals, RotationEquivariant) {
    auto m = fixtures::torus(10, 7);
    auto before = compute_vertex_normals(m);
    std::mt19937_64 rng(3);
    for (int trial = 0; trial < 5; ++trial) {
        Eigen::Quaterniond q = Eigen::Quaterniond::UnitRandom();
        const Eigen::Matrix3d R = q.toRotationMatrix();
        Mesh r = m;
        for (auto& v : r.vertices) v = R * v;
        auto after = compute_vertex_normals(r);
        for (std::size_t i = 0; i < m.vertices.size(); ++i) EXPECT_LT((after[i] - R * before[i]).norm(), 1e-9);
    }
}

// --- sampling ------------------------------------------------------------------

TEST(Sampling, PointsStayInTrianglePlane) {
    Mesh m;
    m.vertices = {{0, 0, 0.5}, {1, 0, 0.5}, {0, 1, 0.5}};
    m.faces = {{0, 1, 2}};
    for (const auto& p : sample_surface(m, 1000, 1)) {
        EXPECT_NEAR(p.z(), 0.5, 1e-7);
        EXPECT_GE(p.x(), -1e-12);
        EXPECT_GE(p.y(), -1e-12);
        EXPECT_LE(p.x() + p.y(), 1.0 + 1e-12);
    }
}

TEST(Sampling, AreaProportionalWithinThreeSigma) {
    // Triangle A has 9x the area of triangle B (x > 2 identifies B).
    Mesh m;
    m.vertices = {{0, 0, 0}, {3, 0, 0}, {0, 3, 0}, {4, 0, 0}, {5, 0, 0}, {4, 1, 0}};
    m.faces = {{0, 1, 2}, {3, 4, 5}};
    const std::size_t n = 10000;
    auto pts = sample_surface(m, n, 42);
    std::size_t in_a = 0;
    for (const auto& p : pts) in_a += p.x() <= 3.0 ? 1 : 0;
    // binomial(n, 0.9): mean 9000, sigma 30
    const double mean = 0.9 * n, sigma = std::sqrt(n * 0.9 * 0.1);
    EXPECT_NEAR(static_cast<double>(in_a), mean, 3 * sigma);
}

TEST(Sampling, DeterministicPerSeed) {
    auto m = fixtures::icosphere(2);
    EXPECT_EQ(sample_surface(m, 500, 9), sample_surface(m, 500, 9));
    EXPECT_NE(sample_surface(m, 500, 9), sample_surface(m, 500, 10));
}

TEST(Sampling, ZeroAreaRejected) {
    Mesh m;
    m.vertices = {{0, 0, 0}, {1, 0, 0}, {2, 0, 0}};
    m.faces = {{0, 1, 2}};
    EXPECT_THROW(sample_surface(m, 10, 0), NumericError);
}

// --- chamfer --------------------------------------------------------------------

TEST(Chamfer, Analytic) {
    EXPECT_DOUBLE_EQ(chamfer_distance({Vec3(0, 0, 0)}, {Vec3(1, 0, 0)}), 2.0);
    auto pts = test::random_points(200, 5);
    EXPECT_EQ(chamfer_distance(pts, pts), 0.0);
    EXPECT_THROW(chamfer_distance({}, pts), ValidationError);
}

TEST(Chamfer, MatchesBruteForce) {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        auto a = test::random_points(50, seed);
        auto b = test::random_points(50, seed + 100);
        EXPECT_NEAR(chamfer_distance(a, b), oracle::chamfer(a, b), 1e-12);
    }
    // larger sets exercise the tree's pruning
    auto a = test::random_points(2000, 1), b = test::random_points(1500, 2);
    EXPECT_NEAR(chamfer_distance(a, b), oracle::chamfer(a, b), 1e-12);
}

TEST(Chamfer, SymmetricAndZeroOnlyForEqualSets) {
    auto a = test::random_points(300, 7), b = test::random_points(250, 8);
    EXPECT_EQ(chamfer_distance(a, b), chamfer_distance(b, a));
    auto shuffled = a;
    std::shuffle(shuffled.begin(), shuffled.end(), std::mt19937(1));
    shuffled.push_back(a[3]);  // duplicates do not change the set
    EXPECT_EQ(chamfer_distance(a, shuffled), 0.0);
    auto moved = a;
    moved[10].x() += 1e-5;
    EXPECT_GT(chamfer_distance(a, moved), 0.0);
}

TEST(Chamfer, MeshSelfDistanceIsZeroWithSharedSamples) {
    auto m = fixtures::icosphere(2);
    auto pts = sample_surface(m, 2000, 3);
    EXPECT_EQ(chamfer_distance(pts, sample_surface(m, 2000, 3)), 0.0);
    EXPECT_EQ(mesh_chamfer_distance(m, m, 5000, 0), 0.0);
}

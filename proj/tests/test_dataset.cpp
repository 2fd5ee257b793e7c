#include <catch2/catch_amalgamated.hpp>
#include <filesystem>
#include <fstream>

#include "annbias/dataset.hpp"
#include "oracles.hpp"

using namespace annbias;
namespace at = annbias::testing;
namespace fs = std::filesystem;

namespace {

fs::path temp_csv(const std::string& name) {
    return fs::temp_directory_path() / ("annbias_" + name + ".csv");
}

void write_file(const fs::path& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    out << content;
}

Dataset sample_dataset(bool with_b, bool with_pos) {
    Rng rng(7);
    Dataset d;
    d.X = at::random_matrix(rng, 5, 3);
    d.y = at::random_binary(rng, 5);
    if (with_b) {
        d.b.resize(5);
        for (int i = 0; i < 5; ++i) d.b[i] = rng.uniform(0.0, 1.0);
    }
    if (with_pos)
        for (int i = 0; i < 5; ++i) d.position.push_back(1 + static_cast<int>(rng.bounded(2)));
    return d;
}

}  // namespace

TEST_CASE("dataset CSV round trip is exact") {
    for (bool with_b : {false, true}) {
        for (bool with_pos : {false, true}) {
            Dataset d = sample_dataset(with_b, with_pos);
            auto path = temp_csv("roundtrip");
            export_dataset(d, path.string());
            Dataset back = import_dataset(path.string());
            fs::remove(path);

            CHECK(back.X == d.X);
            CHECK(back.y == d.y);
            CHECK(back.b == d.b);
            CHECK(back.position == d.position);
        }
    }
}

TEST_CASE("import rejects a non-binary label with its line number") {
    auto path = temp_csv("badlabel");
    write_file(path, "f0,f1,label,position,b\n1.0,2.0,1,,\n0.5,0.25,2,,\n");
    try {
        import_dataset(path.string());
        FAIL("expected ParseError");
    } catch (const ParseError& e) {
        CHECK(std::string(e.what()).find("line 3") != std::string::npos);
    }
    fs::remove(path);
}

TEST_CASE("header-only file imports as an empty dataset") {
    auto path = temp_csv("headeronly");
    write_file(path, "f0,f1,f2,label,position,b\n");
    Dataset d = import_dataset(path.string());
    fs::remove(path);
    CHECK(d.n() == 0);
    CHECK(d.n_features() == 3);
    CHECK_FALSE(d.has_b());
}

TEST_CASE("import validates structure") {
    SECTION("bad header") {
        auto path = temp_csv("badheader");
        write_file(path, "f0,f1,click,position,b\n");
        CHECK_THROWS_AS(import_dataset(path.string()), ParseError);
        fs::remove(path);
    }
    SECTION("wrong field count carries the line number") {
        auto path = temp_csv("badcount");
        write_file(path, "f0,f1,label,position,b\n1.0,2.0,1,\n");
        try {
            import_dataset(path.string());
            FAIL("expected ParseError");
        } catch (const ParseError& e) {
            CHECK(std::string(e.what()).find("line 2") != std::string::npos);
        }
        fs::remove(path);
    }
    SECTION("b outside [0,1] rejected") {
        auto path = temp_csv("badb");
        write_file(path, "f0,f1,label,position,b\n1.0,2.0,1,1,1.25\n");
        CHECK_THROWS_AS(import_dataset(path.string()), ParseError);
        fs::remove(path);
    }
    SECTION("position must be 1 or 2") {
        auto path = temp_csv("badpos");
        write_file(path, "f0,f1,label,position,b\n1.0,2.0,1,3,0.5\n");
        CHECK_THROWS_AS(import_dataset(path.string()), ParseError);
        fs::remove(path);
    }
    SECTION("optional fields must be consistently present") {
        auto path = temp_csv("inconsistent");
        write_file(path, "f0,f1,label,position,b\n1.0,2.0,1,1,0.5\n1.0,2.0,0,,\n");
        CHECK_THROWS_AS(import_dataset(path.string()), ParseError);
        fs::remove(path);
    }
    SECTION("missing file") {
        CHECK_THROWS_AS(import_dataset("/nonexistent/nowhere.csv"), IoError);
    }
}

TEST_CASE("concat stacks rows and checks field presence") {
    Dataset a = sample_dataset(true, true);
    Dataset b = sample_dataset(true, true);
    Dataset joined = concat(a, b);
    CHECK(joined.n() == 10);
    CHECK(joined.X.topRows(5) == a.X);
    CHECK(joined.X.bottomRows(5) == b.X);
    CHECK(joined.b.head(5) == a.b);
    CHECK(joined.b.tail(5) == b.b);

    Dataset no_b = sample_dataset(false, true);
    CHECK_THROWS_AS(concat(a, no_b), InputError);
}

TEST_CASE("dataset validation catches bad values") {
    Dataset d = sample_dataset(true, true);
    SECTION("non-binary label") {
        d.y[2] = 0.5;
        CHECK_THROWS_AS(d.validate(), InputError);
    }
    SECTION("b outside range") {
        d.b[0] = 1.5;
        CHECK_THROWS_AS(d.validate(), InputError);
    }
    SECTION("ragged optional field") {
        d.b.conservativeResize(3);
        CHECK_THROWS_AS(d.validate(), InputError);
    }
}

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <sstream>

#include "tcvdp/config.hpp"

using namespace tcvdp;

TEST_CASE("format_double round-trips") {
    for (double v : {0.0, 1.0, -3.5, 0.1, 1e-300, 1.2345678901234567e17,
                     3.141592653589793}) {
        CHECK(std::stod(format_double(v)) == v);
    }
}

TEST_CASE("settings parse and typed getters") {
    Settings s = Settings::parse_string(
        "# comment line\n"
        "oscillator.omega = 1.5\n"
        "ensemble.n_traj = 2000   # trailing comment\n"
        "\n"
        "sweep.n_list = 4, 8,16 ,32\n"
        "sync.times = 100.0,200.5\n"
        "name = ring\n");
    CHECK(s.get_double("oscillator.omega") == 1.5);
    CHECK(s.get_long("ensemble.n_traj") == 2000);
    CHECK(s.get_str("name") == "ring");
    CHECK(s.get_long_list("sweep.n_list") == std::vector<long>{4, 8, 16, 32});
    CHECK(s.get_double_list("sync.times") == std::vector<double>{100.0, 200.5});
    CHECK(s.get_double("missing.key", 7.0) == 7.0);
    CHECK_THROWS_AS((void)s.get_str("missing.key"), ConfigError);
    CHECK_THROWS_AS((void)s.get_double("name"), ConfigError);
    CHECK_THROWS_AS((void)s.get_long("oscillator.omega"), ConfigError);
}

TEST_CASE("settings serialize round-trips losslessly") {
    Settings s;
    s.set("a.x", 0.1);
    s.set("a.y", -1.2345678901234567e-100);
    s.set("b", 42L);
    s.set("c", std::string("hello world"));
    Settings t = Settings::parse_string(s.serialize());
    CHECK(t.get_double("a.x") == 0.1);
    CHECK(t.get_double("a.y") == -1.2345678901234567e-100);
    CHECK(t.get_long("b") == 42);
    CHECK(t.get_str("c") == "hello world");
    // insertion order preserved
    CHECK(t.entries()[0].first == "a.x");
    CHECK(t.entries()[3].first == "c");
}

TEST_CASE("overrides: last write wins, malformed rejected") {
    Settings s = Settings::parse_string("k = 1\n");
    s.apply_override("k=2");
    CHECK(s.get_long("k") == 2);
    s.apply_override(" k = 3 ");
    CHECK(s.get_long("k") == 3);
    CHECK_THROWS_AS(s.apply_override("novalue"), ConfigError);
    CHECK_THROWS_AS(s.apply_override("=5"), ConfigError);
}

TEST_CASE("malformed config lines rejected with line context") {
    std::istringstream in("good = 1\nbad line without equals\n");
    CHECK_THROWS_AS((void)Settings::parse(in), ConfigError);
    CHECK_THROWS_AS((void)Settings::load("/nonexistent/path/x.cfg"), ConfigError);
}

#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>

#include "sofa/serialize.hpp"

using namespace sofa;

TEST_CASE("canonical dumps sort keys and end with a newline") {
    json j;
    j["zeta"] = 1;
    j["alpha"] = 2;
    std::string s = canonical_dump(j);
    CHECK(s.find("alpha") < s.find("zeta"));
    CHECK(s.back() == '\n');
}

TEST_CASE("schedule plan serializes hex masks and fetch totals") {
    FCSet fc(4);
    fc[0].entries = {{2, 9}, {3, 8}};
    fc[1].entries = {{2, 9}, {3, 8}};
    fc[2].entries = {{2, 9}, {3, 8}};
    fc[3].entries = {{5, 7}, {6, 6}};
    SchedulePlan plan = schedule_rass(build_demand_map(fc), 4);
    json j = to_json(plan);
    CHECK(j["total_key_fetches"] == 4);
    REQUIRE(j["phases"].is_array());
    CHECK(j["phases"][0]["keys"] == json::array({2, 3, 5, 6}));
    CHECK(j["phases"][0]["served_mask"] == "0xf");
}

TEST_CASE("atomic write leaves no temp file and replaces content") {
    namespace fs = std::filesystem;
    fs::path dir = fs::temp_directory_path() / "sofa_ser_test";
    fs::create_directories(dir);
    fs::path f = dir / "x.json";
    atomic_write_file(f, "one\n");
    atomic_write_file(f, "two\n");
    std::ifstream in(f);
    std::string content((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    CHECK(content == "two\n");
    CHECK_FALSE(fs::exists(dir / "x.json.tmp"));
    fs::remove_all(dir);
}

TEST_CASE("op tally json carries all six kinds") {
    OpTally t;
    t.add = 1;
    t.cmp = 2;
    t.shift = 3;
    t.mul = 4;
    t.exp = 5;
    t.div = 6;
    json j = to_json(t);
    CHECK(j["add"] == 1);
    CHECK(j["cmp"] == 2);
    CHECK(j["shift"] == 3);
    CHECK(j["mul"] == 4);
    CHECK(j["exp"] == 5);
    CHECK(j["div"] == 6);
}

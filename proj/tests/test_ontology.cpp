#include <doctest.h>

#include <json.hpp>

#include "cultprobe/error.hpp"
#include "cultprobe/ontology.hpp"

using namespace cultprobe;

TEST_CASE("bundled registry shape") {
    const Registry& r = Registry::bundled();
    CHECK(r.dimensions().size() == 8);
    CHECK(r.languages().size() == 10);
    std::size_t core = 0, countries = 0, tangible = 0;
    for (const auto& c : r.concepts()) {
        (c.domain_id == "countries" ? countries : core)++;
        tangible += c.tangible;
    }
    CHECK(core == 200);
    CHECK(countries == 10);
    CHECK(tangible == 40);
    CHECK(r.domains().size() == 12);
    CHECK(r.language("EN").alphabet == U"abcdefghijklmnopqrstuvwxyz");
    CHECK(r.nationality("IW").additional_names.empty());
}

TEST_CASE("nationality_for orders") {
    const Registry& r = Registry::bundled();
    CHECK(r.nationality_for("EL", NationalityOrder::Primary) == std::vector<std::string>{"Greek"});
    CHECK(r.nationality_for("EL", NationalityOrder::Extended) == std::vector<std::string>{"Greek", "Cypriot", "Albanian"});
    CHECK(r.nationality_for("IW", NationalityOrder::Extended) == std::vector<std::string>{"Israeli"});
    CHECK_THROWS_AS(r.nationality_for("XX", NationalityOrder::Primary), Error);
}

TEST_CASE("registry validation names the offending id") {
    auto j = nlohmann::json::parse(bundled_registry_json());
    j["concepts"][0]["domain_id"] = "xyz";
    try {
        Registry::from_json(j.dump());
        FAIL("expected an error");
    } catch (const Error& e) {
        CHECK(std::string(e.what()).find("xyz") != std::string::npos);
    }

    auto dup = nlohmann::json::parse(bundled_registry_json());
    dup["concepts"].push_back(dup["concepts"][0]);
    try {
        Registry::from_json(dup.dump());
        FAIL("expected an error");
    } catch (const Error& e) {
        CHECK(std::string(e.what()).find(dup["concepts"][0]["id"].get<std::string>()) != std::string::npos);
    }
    CHECK_THROWS_AS(Registry::from_json("{not json"), Error);
}

TEST_CASE("registry round-trips through JSON") {
    const Registry& r = Registry::bundled();
    const Registry back = Registry::from_json(r.to_json());
    CHECK(back == r);
    CHECK(back.to_json() == r.to_json());
}

TEST_CASE("alphabet membership is total") {
    const Registry& r = Registry::bundled();
    for (const auto& l : r.languages()) {
        CHECK(!l.alphabet.empty());
        for (char32_t cp : {U'a', U'я', U'\0', U'\U0010FFFF', U'7', U' ', U'食'}) {
            CHECK_NOTHROW((void)l.in_alphabet(cp));
        }
        for (char32_t cp : l.alphabet) CHECK(l.in_alphabet(cp));
    }
    CHECK(r.language("RU").in_alphabet("йкуаскымдо"));
    CHECK_FALSE(r.language("EN").in_alphabet("abc1"));
}

TEST_CASE("nationality order parsing") {
    CHECK(parse_nationality_order("primary") == NationalityOrder::Primary);
    CHECK(parse_nationality_order("extended") == NationalityOrder::Extended);
    CHECK_THROWS_AS(parse_nationality_order("second"), Error);
}

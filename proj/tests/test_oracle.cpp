#include "doctest.h"

#include <random>
#include <thread>

#include "httplib.h"
#include "json.hpp"
#include "malformed_corpus.hpp"
#include "meqa/errors.hpp"
#include "meqa/remote_oracle.hpp"
#include "meqa/simulator.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

using namespace meqa;
using nlohmann::json;

namespace {

class ScriptTransport : public Transport {
public:
    std::vector<std::function<TransportReply()>> replies;
    std::vector<std::string> bodies;
    std::vector<std::map<std::string, std::string>> headers;

    TransportReply post(const std::string& body, const std::map<std::string, std::string>& h, double) override {
        bodies.push_back(body);
        headers.push_back(h);
        const auto& f = replies.at(std::min(bodies.size(), replies.size()) - 1);
        return f();
    }
};

TransportReply ok(const std::string& text) { return {200, json{{"text", text}}.dump()}; }

EndpointConfig endpoint() {
    EndpointConfig c;
    c.url = "http://127.0.0.1:1/oracle";
    c.token_env = "";
    return c;
}

OracleRequest request_with(RgbImage img) {
    OracleRequest r;
    r.template_id = TemplateId::scene_caption;
    r.prompt = fill_template(TemplateId::scene_caption);
    r.images.push_back({"step_0", std::move(img), {}});
    return r;
}

}  // namespace

TEST_CASE("templates substitute the question") {
    const std::string q = "Is the lamp on?";
    CHECK(fill_template(TemplateId::confidence, q).find("`Is the lamp on?'") != std::string::npos);
    CHECK(fill_template(TemplateId::direction, q).find("'Is the lamp on?'") != std::string::npos);
    CHECK(fill_template(TemplateId::answer_mc, q).rfind(q, 0) == 0);
    CHECK(fill_template(TemplateId::answer_open, q) == "Is the lamp on? Answer with the brief sentence.");
    CHECK(fill_template(TemplateId::scene_caption).find("Room: <room>") != std::string::npos);
    CHECK(fill_template(TemplateId::object_caption).find("cate: [category]") != std::string::npos);
    for (auto id : {TemplateId::scene_caption, TemplateId::object_caption, TemplateId::confidence,
                    TemplateId::direction, TemplateId::answer_mc, TemplateId::answer_open, TemplateId::judge}) {
        CHECK(parse_template_id(template_name(id)) == id);
        CHECK(fill_template(id, q).find("{Question}") == std::string::npos);
    }
    CHECK(compose_prompt(TemplateId::answer_open, q, "") == fill_template(TemplateId::answer_open, q));
    CHECK(compose_prompt(TemplateId::answer_open, q, "kind: room") ==
          "Memory:\nkind: room\n\n" + fill_template(TemplateId::answer_open, q));
}

TEST_CASE("parsers accept their own template output") {
    ParseNotes n;
    const auto s = parse_scene_caption("```\nRoom: kitchen\nObject: chair, table\nDescription: a bright kitchen\n```", n);
    CHECK(n.warnings.empty());
    CHECK(s == SceneCaption{"kitchen", {"chair", "table"}, "a bright kitchen"});
    const auto o = parse_object_caption("cate: [sofa]\nattr: [white]\ndesc: [white fabric sofa]", n);
    CHECK(n.warnings.empty());
    CHECK(o == ObjectCaption{"sofa", "white", "white fabric sofa"});
}

TEST_CASE("parse_letter") {
    struct Row {
        std::string text;
        int n;
        std::optional<char> want;
    };
    const std::vector<Row> rows = {
        {"C", 5, 'C'},
        {"(B)", 5, 'B'},
        {"D. High", 5, 'D'},
        {"b", 5, 'B'},
        {"The answer is (C).", 4, 'C'},
        {"Answer: B", 3, 'B'},
        {"A red door is visible, so I pick B", 3, 'B'},
        {"A", 1, 'A'},
        {"Z", 3, std::nullopt},
        {"no idea", 5, std::nullopt},
        {"", 5, std::nullopt},
    };
    for (const auto& r : rows) {
        ParseNotes n;
        CAPTURE(r.text);
        CHECK(parse_letter(r.text, r.n, n) == r.want);
        CHECK(n.warnings.empty() == r.want.has_value());
    }
}

TEST_CASE("confidence values") {
    CHECK(confidence_value('A') == 0.0);
    CHECK(confidence_value('C') == 0.5);
    CHECK(confidence_value('E') == 1.0);
}

TEST_CASE("malformed replies map to their fallbacks") {
    const auto all = corpus::cases();
    REQUIRE(all.size() == 20);
    for (const auto& c : all) {
        CAPTURE(c.name);
        corpus::CannedOracle o(c.reply, c.failure);
        CHECK(c.fallback_ok(o));
    }
}

TEST_CASE("scripted oracle") {
    const Scene scene = test::load_fixture("two_sofas");
    Question q;
    q.id = "q";
    q.scene = "two_sofas";
    q.text = "Are the two sofas the same color?";
    q.options = {"Yes", "No"};
    q.answer = "B";
    q.entities = {1, 2};
    ScriptedOracle o(scene, q);
    CHECK(o.object_description(1) == "red sofa in the living room at (1.2, 5.2)");
    CHECK(o.object_description(99).empty());

    ImageHandle img{"step_0", RgbImage(8, 6, Rgb{90, 90, 90}), {}};
    img.meta.pose = Pose(3.0, 3.0, 0.0);

    SUBCASE("confidence and answer depend on what the prompt and image show") {
        CHECK(confidence(o, q, "", img).letter == 'B');
        CHECK(answer_question(o, q, "", img).answer == "A");
        const std::string both = "desc=" + o.object_description(1) + "\ndesc=" + o.object_description(2);
        CHECK(confidence(o, q, both, img).letter == 'E');
        CHECK(answer_question(o, q, both, img).answer == "B");
        img.meta.visible_objects = {2};
        CHECK(confidence(o, q, "desc=" + o.object_description(1), img).letter == 'E');
        CHECK(confidence(o, q, "", img).letter == 'B');
    }
    SUBCASE("direction points at the nearest unknown entity") {
        img.meta.pose = Pose(6.0, 3.0, 0.0);
        img.meta.candidates = {{'A', Vec2{3.0, 5.0}}, {'B', Vec2{9.0, 1.5}}};
        // red sofa is nearer: 5.2 m vs 5.4 m
        CHECK(choose_direction(o, q, img, 2, "").letter == 'A');
        CHECK(choose_direction(o, q, img, 2, "desc=" + o.object_description(1)).letter == 'B');
        img.meta.candidates = {{'A', Vec2{9.0, 1.5}}};
        CHECK(choose_direction(o, q, img, 1, "").letter == 'A');
    }
    SUBCASE("captions") {
        img.meta.visible_objects = {1, 3};
        const auto s = describe_scene(o, img);
        CHECK(s.ok);
        CHECK(s.caption.room == "living room");
        CHECK(s.caption.objects == std::vector<std::string>{"sofa", "table"});
        const auto black = describe_scene(o, ImageHandle{"b", RgbImage(8, 6), {}});
        CHECK(black.caption.room.empty());
        CHECK_FALSE(black.warnings.empty());

        ImageHandle crop{"c", RgbImage(4, 4, Rgb{200, 0, 0}), {}};
        crop.meta.object_id = 1;
        const auto c = describe_object(o, crop);
        CHECK(c.caption == ObjectCaption{"sofa", "red, fabric, three-seat", o.object_description(1)});
        crop.meta.object_id.reset();
        CHECK(describe_object(o, crop).caption == ObjectCaption{"unknown", "", ""});
    }
    SUBCASE("open questions") {
        Question open = q;
        open.type = "open";
        open.options.clear();
        open.answer = "No, one is red and one is blue.";
        ScriptedOracle oo(scene, open);
        CHECK(answer_question(oo, open, "", img).answer == "I could not find the object in question.");
        img.meta.visible_objects = {1, 2};
        CHECK(answer_question(oo, open, "", img).answer == open.answer);
    }
    SUBCASE("the scripted oracle does not judge") {
        CHECK_THROWS_AS(o.complete({TemplateId::judge, "x", {}}), OracleError);
    }
}

TEST_CASE("question json roundtrip") {
    for (const auto& q : load_questions(test::data_path("questions/suite.json"))) {
        const auto back = question_from_json(question_to_json(q));
        CHECK(question_to_json(back) == question_to_json(q));
        CHECK(back.entities == q.entities);
    }
}

TEST_CASE("remote oracle over a scripted transport") {
    auto t = std::make_shared<ScriptTransport>();

    SUBCASE("canned text is returned verbatim and parsed per template") {
        t->replies = {[] { return ok("Room: kitchen\nObject: chair\nDescription: d"); }};
        RemoteOracle o(endpoint(), t);
        const auto r = describe_scene(o, {"s", RgbImage(8, 6, Rgb{1, 2, 3}), {}});
        CHECK(r.caption.room == "kitchen");
        const json body = json::parse(t->bodies.at(0));
        CHECK(body.at("template_id") == "scene_caption");
        CHECK(body.at("prompt") == fill_template(TemplateId::scene_caption));
        CHECK(body.at("images").size() == 1);
    }
    SUBCASE("timeout retries then raises a typed error") {
        t->replies = {[]() -> TransportReply { throw OracleTimeoutError("slow"); }};
        auto cfg = endpoint();
        cfg.retries = 2;
        RemoteOracle o(cfg, t);
        CHECK_THROWS_AS(o.complete(request_with(RgbImage(4, 4))), OracleTimeoutError);
        CHECK(o.attempts() == 3);
    }
    SUBCASE("timeout then success") {
        t->replies = {[]() -> TransportReply { throw OracleTimeoutError("slow"); }, [] { return ok("E"); }};
        RemoteOracle o(endpoint(), t);
        CHECK(o.complete(request_with(RgbImage(4, 4))) == "E");
        CHECK(o.attempts() == 2);
    }
    SUBCASE("client errors are not retried") {
        t->replies = {[] { return TransportReply{404, "missing"}; }};
        RemoteOracle o(endpoint(), t);
        try {
            o.complete(request_with(RgbImage(4, 4)));
            FAIL("expected OracleHttpError");
        } catch (const OracleHttpError& e) {
            CHECK(e.status() == 404);
        }
        CHECK(o.attempts() == 1);
    }
    SUBCASE("malformed reply body") {
        t->replies = {[] { return TransportReply{200, "not json"}; }};
        RemoteOracle o(endpoint(), t);
        CHECK_THROWS_AS(o.complete(request_with(RgbImage(4, 4))), OracleError);
    }
    SUBCASE("2 MB image with a 1 MB cap fails before sending") {
        std::mt19937 rng(1);
        const RgbImage noise = oracle::random_image(rng, 840, 840);
        REQUIRE(encode_png(noise).size() > 2'000'000);
        RemoteOracle o(endpoint(), t);
        CHECK_THROWS_AS(o.complete(request_with(noise)), OracleImageTooLargeError);
        CHECK(t->bodies.empty());
    }
    SUBCASE("bearer token from the environment") {
        setenv("MEQA_TEST_TOKEN", "s3cret", 1);
        auto cfg = endpoint();
        cfg.token_env = "MEQA_TEST_TOKEN";
        t->replies = {[] { return ok("A"); }};
        RemoteOracle o(cfg, t);
        o.complete(request_with(RgbImage(4, 4)));
        CHECK(t->headers.at(0).at("Authorization") == "Bearer s3cret");
    }
}

TEST_CASE("endpoint validation") {
    EndpointConfig c;
    CHECK_THROWS_AS(c.validate(), ValidationError);
    c.url = "https://example.com/x";
    CHECK_THROWS_AS(RemoteOracle{c}, ValidationError);
    c.url = "http://127.0.0.1:9/x";
    c.timeout_s = 0;
    CHECK_THROWS_AS(c.validate(), ValidationError);
}

TEST_CASE("remote oracle against a local HTTP server") {
    httplib::Server server;
    std::string seen_template;
    server.Post("/oracle", [&](const httplib::Request& req, httplib::Response& res) {
        seen_template = json::parse(req.body).at("template_id").get<std::string>();
        res.set_content(json{{"text", "C"}}.dump(), "application/json");
    });
    const int port = server.bind_to_any_port("127.0.0.1");
    REQUIRE(port > 0);
    std::thread th([&] { server.listen_after_bind(); });
    server.wait_until_ready();

    EndpointConfig cfg;
    cfg.url = "http://127.0.0.1:" + std::to_string(port) + "/oracle";
    cfg.timeout_s = 5;
    RemoteOracle o(cfg);
    const auto r = confidence(o, corpus::mc_question(), "", {"s", RgbImage(8, 6, Rgb{9, 9, 9}), {}});
    server.stop();
    th.join();
    CHECK(r.letter == 'C');
    CHECK(seen_template == "confidence");
}

#define CPPHTTPLIB_OPENSSL_SUPPORT
#include <httplib.h>

#include <gtest/gtest.h>

#include <json.hpp>
#include <atomic>
#include <thread>

#include "mcre/caption_generator.hpp"
#include "mcre/error.hpp"
#include "synthetic.hpp"

using namespace mcre;
using namespace std::chrono_literals;

namespace {

const std::string kGood =
    "Step 1: a blue shirt.\n```json\n"
    R"({"modification_focused": "a red shirt", "integration_focused": "a red shirt on a hanger"})"
    "\n```\n";

class ScriptedProvider : public CaptionProvider {
public:
    explicit ScriptedProvider(std::vector<std::function<std::string()>> script) : script_(std::move(script)) {}
    [[nodiscard]] std::string id() const override { return "scripted"; }
    [[nodiscard]] bool needs_image() const override { return false; }
    std::string complete(const CaptionRequest& request) override {
        prompts.push_back(request.prompt);
        reprompts.push_back(request.reprompt);
        return script_.at(calls++)();
    }
    std::size_t calls = 0;
    std::vector<std::string> prompts;
    std::vector<bool> reprompts;

private:
    std::vector<std::function<std::string()>> script_;
};

std::function<std::string()> reply(std::string s) {
    return [s] { return s; };
}
std::function<std::string()> transient() {
    return []() -> std::string { throw TransientProviderError("HTTP 503"); };
}

GenerationOptions quiet_options(std::vector<std::chrono::milliseconds>* sleeps = nullptr) {
    GenerationOptions o;
    o.retry.base_delay = 100ms;
    o.sleep = [sleeps](std::chrono::milliseconds d) {
        if (sleeps) sleeps->push_back(d);
    };
    o.clock = [] { return std::chrono::system_clock::time_point{std::chrono::seconds{86400}}; };
    return o;
}

struct Fixture {
    synth::TempDir dir;
    TemplateRegistry registry;
    ComposedQuery query{"q1", "", "make it red"};
    McotPrompt prompt = build_prompt(query, "mcot-v1", registry);
};

}  // namespace

TEST(RetryPolicy, BoundedExponential) {
    RetryPolicy p{5, 500ms, 3000ms};
    EXPECT_EQ(p.delay(1), 500ms);
    EXPECT_EQ(p.delay(2), 1000ms);
    EXPECT_EQ(p.delay(3), 2000ms);
    EXPECT_EQ(p.delay(4), 3000ms);
    EXPECT_EQ(p.delay(40), 3000ms);
}

TEST(CaptionGenerator, GeneratesAndCaches) {
    Fixture f;
    CaptionCache cache(f.dir / "c.jsonl");
    ScriptedProvider provider({reply(kGood)});
    CaptionGenerator gen(provider, cache, quiet_options());
    bool cached = true;
    auto pair = gen.generate(f.query, f.prompt, &cached);
    EXPECT_FALSE(cached);
    EXPECT_EQ(pair.c_modi, "a red shirt");
    EXPECT_EQ(pair.c_integ, "a red shirt on a hanger");
    EXPECT_EQ(pair.reasoning_trace, "Step 1: a blue shirt.");
    EXPECT_EQ(pair.provider_id, "scripted");
    EXPECT_EQ(pair.prompt_hash, f.prompt.prompt_hash);
    EXPECT_EQ(provider.prompts.at(0), f.prompt.rendered);

    auto rec = cache.find({"q1", f.prompt.prompt_hash, "scripted"});
    ASSERT_TRUE(rec.has_value());
    EXPECT_EQ(rec->raw_response, kGood);
    EXPECT_EQ(rec->created_at, "1970-01-02T00:00:00Z");

    CaptionCache reopened(f.dir / "c.jsonl");
    ScriptedProvider idle({});
    CaptionGenerator again(idle, reopened, quiet_options());
    auto hit = again.generate(f.query, f.prompt, &cached);
    EXPECT_TRUE(cached);
    EXPECT_EQ(idle.calls, 0u);
    EXPECT_EQ(hit, pair);
}

TEST(CaptionGenerator, RepromptsOnceThenSucceeds) {
    Fixture f;
    CaptionCache cache(f.dir / "c.jsonl");
    ScriptedProvider provider({reply("I think it is red."), reply(kGood)});
    CaptionGenerator gen(provider, cache, quiet_options());
    EXPECT_EQ(gen.generate(f.query, f.prompt).c_modi, "a red shirt");
    ASSERT_EQ(provider.calls, 2u);
    EXPECT_FALSE(provider.reprompts[0]);
    EXPECT_TRUE(provider.reprompts[1]);
    EXPECT_EQ(provider.prompts[1], reprompt_text(f.prompt));
}

TEST(CaptionGenerator, ParseFailureAfterRepromptIsNotCached) {
    Fixture f;
    CaptionCache cache(f.dir / "c.jsonl");
    ScriptedProvider provider({reply("no json"), reply(R"({"modification_focused": ""})")});
    CaptionGenerator gen(provider, cache, quiet_options());
    try {
        (void)gen.generate(f.query, f.prompt);
        FAIL();
    } catch (const ParseFailure& e) {
        EXPECT_EQ(e.kind(), ParseFailureKind::EmptyCaption);
    }
    EXPECT_EQ(provider.calls, 2u);
    EXPECT_EQ(cache.size(), 0u);
}

TEST(CaptionGenerator, RetriesTransientFailures) {
    Fixture f;
    CaptionCache cache(f.dir / "c.jsonl");
    ScriptedProvider provider({transient(), transient(), reply(kGood)});
    std::vector<std::chrono::milliseconds> sleeps;
    CaptionGenerator gen(provider, cache, quiet_options(&sleeps));
    EXPECT_EQ(gen.generate(f.query, f.prompt).c_modi, "a red shirt");
    EXPECT_EQ(provider.calls, 3u);
    EXPECT_EQ(sleeps, (std::vector<std::chrono::milliseconds>{100ms, 200ms}));
}

TEST(CaptionGenerator, GivesUpAfterMaxAttempts) {
    Fixture f;
    CaptionCache cache(f.dir / "c.jsonl");
    ScriptedProvider provider({transient(), transient(), transient(), reply(kGood)});
    CaptionGenerator gen(provider, cache, quiet_options());
    try {
        (void)gen.generate(f.query, f.prompt);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::ProviderUnavailable);
    }
    EXPECT_EQ(provider.calls, 3u);
}

TEST(CaptionGenerator, PermanentFailureIsNotRetried) {
    Fixture f;
    CaptionCache cache(f.dir / "c.jsonl");
    ScriptedProvider provider(
        {[]() -> std::string { throw Error(ErrorCode::ProviderUnavailable, "HTTP 401"); }, reply(kGood)});
    CaptionGenerator gen(provider, cache, quiet_options());
    EXPECT_THROW((void)gen.generate(f.query, f.prompt), Error);
    EXPECT_EQ(provider.calls, 1u);
}

TEST(CaptionGenerator, BatchWithFixtureProvider) {
    synth::TempDir dir;
    std::vector<ComposedQuery> queries;
    for (int i = 0; i < 6; ++i) {
        const auto qid = "q" + std::to_string(i);
        queries.push_back({qid, "", "make it color " + std::to_string(i)});
        if (i != 4) synth::write_text(dir / "fx" / (qid + ".txt"), kGood);
    }
    synth::write_text(dir / "fx" / "q2.txt", "garbage");
    synth::write_text(dir / "fx" / "q2.reprompt.txt", kGood);

    TemplateRegistry reg;
    FixtureProvider provider(dir / "fx");
    CaptionCache cache(dir / "c.jsonl");
    auto opts = quiet_options();
    opts.max_in_flight = 3;
    CaptionGenerator gen(provider, cache, opts);
    auto summary = gen.generate_all(queries, "mcot-v1", reg);
    EXPECT_EQ(summary.generated, 5u);
    EXPECT_EQ(summary.failed, 1u);
    EXPECT_EQ(summary.outcomes[4].status, CaptionStatus::Failed);
    EXPECT_EQ(summary.outcomes[4].error_code, ErrorCode::ProviderUnavailable);
    EXPECT_EQ(summary.outcomes[2].status, CaptionStatus::Generated);
    for (std::size_t i = 0; i < queries.size(); ++i) EXPECT_EQ(summary.outcomes[i].query_id, queries[i].query_id);
    EXPECT_EQ(provider.calls(), 7u);

    auto before = synth::read_text(dir / "c.jsonl");
    auto rerun = gen.generate_all(queries, "mcot-v1", reg);
    EXPECT_EQ(rerun.cached, 5u);
    EXPECT_EQ(rerun.generated, 0u);
    EXPECT_EQ(provider.calls(), 8u);
    EXPECT_EQ(synth::read_text(dir / "c.jsonl"), before);
}

TEST(CaptionGenerator, HttpProviderRequiresImage) {
    Fixture f;
    CaptionCache cache(f.dir / "c.jsonl");
    HttpProvider provider({"http://127.0.0.1:9/v1", "", "m"});
    CaptionGenerator gen(provider, cache, quiet_options());
    try {
        (void)gen.generate(f.query, f.prompt);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::ImageUnresolvable);
    }
}

TEST(Base64, Rfc4648Vectors) {
    EXPECT_EQ(base64_encode(""), "");
    EXPECT_EQ(base64_encode("f"), "Zg==");
    EXPECT_EQ(base64_encode("fo"), "Zm8=");
    EXPECT_EQ(base64_encode("foo"), "Zm9v");
    EXPECT_EQ(base64_encode("foobar"), "Zm9vYmFy");
}

TEST(HttpProvider, ConfigErrors) {
    auto code = [](HttpProviderConfig c) {
        try {
            HttpProvider p(std::move(c));
        } catch (const Error& e) {
            return e.code();
        }
        return ErrorCode::Io;
    };
    EXPECT_EQ(code({"no-scheme", "", "m"}), ErrorCode::Config);
    EXPECT_EQ(code({"http://h/v1", "", ""}), ErrorCode::Config);
    EXPECT_EQ(code({"http://h/v1", "MCRE_TEST_SURELY_UNSET_KEY", "m"}), ErrorCode::Config);
}

TEST(HttpProvider, RequestBodyAndReply) {
    HttpProvider p({"http://h/v1/chat/completions", "", "vlm-1"});
    auto body = nlohmann::json::parse(p.request_body("hello", "foo", "image/jpeg"));
    EXPECT_EQ(body["model"], "vlm-1");
    EXPECT_EQ(body["temperature"], 0.0);
    const auto& content = body["messages"][0]["content"];
    EXPECT_EQ(content[0]["text"], "hello");
    EXPECT_EQ(content[1]["image_url"]["url"], "data:image/jpeg;base64,Zm9v");

    EXPECT_EQ(HttpProvider::reply_text(R"({"choices":[{"message":{"content":"hi"}}]})"), "hi");
    EXPECT_EQ(HttpProvider::reply_text(
                  R"({"choices":[{"message":{"content":[{"type":"text","text":"a"},{"type":"text","text":"b"}]}}]})"),
              "ab");
    EXPECT_THROW((void)HttpProvider::reply_text(R"({"choices":[]})"), Error);
    EXPECT_THROW((void)HttpProvider::reply_text("oops"), Error);
}

TEST(HttpProvider, RetriesServerErrorAgainstLocalServer) {
    synth::TempDir dir;
    synth::write_text(dir / "ref.png", "PNGDATA");

    httplib::Server server;
    std::atomic<int> hits{0};
    std::string seen_auth;
    std::string seen_body;
    server.Post("/v1/chat/completions", [&](const httplib::Request& req, httplib::Response& res) {
        if (hits++ == 0) {
            res.status = 503;
            return;
        }
        seen_auth = req.get_header_value("Authorization");
        seen_body = req.body;
        nlohmann::json reply = {{"choices", {{{"message", {{"content", kGood}}}}}}};
        res.set_content(reply.dump(), "application/json");
    });
    const int port = server.bind_to_any_port("127.0.0.1");
    ASSERT_GT(port, 0);
    std::thread thread([&] { server.listen_after_bind(); });
    server.wait_until_ready();

    ::setenv("MCRE_TEST_API_KEY", "secret", 1);
    HttpProvider provider({"http://127.0.0.1:" + std::to_string(port) + "/v1/chat/completions",
                           "MCRE_TEST_API_KEY", "vlm-1", 5.0});
    Fixture f;
    f.query.reference_image = (dir / "ref.png").string();
    CaptionCache cache(f.dir / "c.jsonl");
    CaptionGenerator gen(provider, cache, quiet_options());
    auto pair = gen.generate(f.query, f.prompt);

    server.stop();
    thread.join();
    EXPECT_EQ(pair.c_modi, "a red shirt");
    EXPECT_EQ(pair.provider_id, "http:vlm-1");
    EXPECT_EQ(hits.load(), 2);
    EXPECT_EQ(seen_auth, "Bearer secret");
    EXPECT_NE(seen_body.find("data:image/png;base64," + base64_encode("PNGDATA")), std::string::npos);
}

TEST(HttpProvider, ClientErrorIsPermanent) {
    httplib::Server server;
    std::atomic<int> hits{0};
    server.Post("/v1", [&](const httplib::Request&, httplib::Response& res) {
        ++hits;
        res.status = 400;
        res.set_content("bad request", "text/plain");
    });
    const int port = server.bind_to_any_port("127.0.0.1");
    std::thread thread([&] { server.listen_after_bind(); });
    server.wait_until_ready();

    HttpProvider provider({"http://127.0.0.1:" + std::to_string(port) + "/v1", "", "m", 5.0});
    ComposedQuery q{"q", "", "x"};
    try {
        (void)provider.complete(CaptionRequest{q, "p", std::nullopt, false});
        ADD_FAILURE();
    } catch (const TransientProviderError&) {
        ADD_FAILURE() << "400 must not be transient";
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::ProviderUnavailable);
    }
    server.stop();
    thread.join();
    EXPECT_EQ(hits.load(), 1);
}

#include <atomic>
#include <chrono>
#include <cmath>
#include <map>
#include <mutex>
#include <random>
#include <thread>

#include <doctest.h>
#include <httplib.h>

#include "spatialrel/errors.h"
#include "spatialrel/relation_prior.h"
#include "test_util.h"

using namespace spatialrel;
using nlohmann::json;
using spatialrel::testing::TempDir;

namespace {

Triple make(const std::string& s, const std::string& r, const std::string& o) {
  Triple t;
  t.subject.text = s;
  t.subject.box = {0.5, 0.5, 0.1, 0.1};
  t.object.text = o;
  t.object.box = {0.5, 0.5, 0.1, 0.1};
  t.relation = r;
  return t;
}

std::string record_line(const std::string& s, const std::string& o,
                        const std::vector<std::pair<std::string, double>>& preds) {
  json p = json::array();
  for (const auto& [r, x] : preds) p.push_back({{"relation", r}, {"score", x}});
  return json{{"subject", s}, {"object", o}, {"predictions", p}}.dump() + "\n";
}

void check_record_invariants(const PriorRecord& rec, std::size_t top_k) {
  CHECK(rec.predictions.size() <= top_k);
  CHECK_NOTHROW(validate_prior_record(rec, top_k));
}

// Straight-line evaluation of the smoothed co-occurrence score from raw
// triple counts.
double hand_score(const std::vector<Triple>& data, const std::vector<std::string>& relations, double a,
                  const std::string& s, const std::string& r, const std::string& o) {
  double c_sro = 0, c_so = 0, c_sr = 0, c_s = 0, c_or = 0, c_o = 0, c_r = 0;
  for (const auto& t : data) {
    const bool ms = t.subject.text == s, mo = t.object.text == o, mr = t.relation == r;
    c_sro += ms && mo && mr;
    c_so += ms && mo;
    c_sr += ms && mr;
    c_s += ms;
    c_or += mo && mr;
    c_o += mo;
    c_r += mr;
  }
  const double v = static_cast<double>(relations.size());
  const double n = static_cast<double>(data.size());
  const double backoff = ((c_sr + a) / (c_s + a * v) + (c_or + a) / (c_o + a * v) + (c_r + a) / (n + a * v)) / 3.0;
  return (c_sro + a * backoff) / (c_so + a);
}

}  // namespace

TEST_CASE("validate_prior_record") {
  PriorRecord ok{"man", "horse", {{"riding", 0.5}, {"on", 0.5}, {"near", 0.0}}};
  CHECK_NOTHROW(validate_prior_record(ok));
  CHECK_THROWS_AS(validate_prior_record(ok, 2), ValidationError);
  PriorRecord up{"man", "horse", {{"on", 0.2}, {"riding", 0.5}}};
  CHECK_THROWS_WITH_AS(validate_prior_record(up), doctest::Contains("non-increasing violated"), ValidationError);
  PriorRecord neg{"man", "horse", {{"on", -0.1}}};
  CHECK_THROWS_AS(validate_prior_record(neg), ValidationError);
  PriorRecord nan{"man", "horse", {{"on", std::nan("")}}};
  CHECK_THROWS_AS(validate_prior_record(nan), ValidationError);
  PriorRecord dup{"man", "horse", {{"on", 0.3}, {"on", 0.2}}};
  CHECK_THROWS_AS(validate_prior_record(dup), ValidationError);
}

TEST_CASE("file prior lookup and misses") {
  TempDir dir;
  auto path = dir.write("p.jsonl", record_line("Man", "horse", {{"riding", 0.6}, {"on", 0.3}, {"near", 0.1}}) + "\n" +
                                       record_line("cat", "mat", {{"on", 1.0}}));
  auto prior = load_prior_file(path, 2);
  CHECK(prior->kind() == PriorKind::kFile);
  CHECK(prior->size() == 2);
  auto rec = prior->query("man", "HORSE");
  REQUIRE(rec.predictions.size() == 2);
  CHECK(rec.predictions[0] == RelationScore{"riding", 0.6});
  CHECK(rec.predictions[1] == RelationScore{"on", 0.3});
  auto miss = prior->query("dog", "frisbee");
  CHECK(miss.predictions.empty());
  CHECK(miss.subject == "dog");
}

TEST_CASE("file prior errors name the line") {
  TempDir dir;
  auto order = dir.write("a.jsonl", record_line("a", "b", {{"on", 0.9}}) + record_line("c", "d", {{"on", 0.2}, {"in", 0.5}}));
  CHECK_THROWS_WITH_AS(load_prior_file(order), doctest::Contains("line 2: non-increasing violated"), ParseError);
  auto bad = dir.write("b.jsonl", record_line("a", "b", {{"on", 0.9}}) + "{oops\n");
  CHECK_THROWS_WITH_AS(load_prior_file(bad), doctest::Contains("line 2"), ParseError);
  auto dup = dir.write("c.jsonl", record_line("a", "b", {{"on", 0.9}}) + record_line("A", " b ", {{"in", 0.9}}));
  CHECK_THROWS_WITH_AS(load_prior_file(dup), doctest::Contains("duplicate"), ParseError);
  auto shape = dir.write("d.jsonl", R"({"subject": "a", "object": "b", "predictions": [{"relation": "on"}]})");
  CHECK_THROWS_WITH_AS(load_prior_file(shape), doctest::Contains("line 1"), ParseError);
  CHECK_THROWS_AS(load_prior_file(dir.file("missing.jsonl")), ParseError);
}

TEST_CASE("file prior round-trip") {
  std::mt19937 gen(4);
  std::vector<PriorRecord> records;
  for (int i = 0; i < 50; ++i) {
    PriorRecord r{"s" + std::to_string(i), "o" + std::to_string(i % 7), {}};
    double score = 1.0;
    const int len = static_cast<int>(gen() % 6);
    for (int k = 0; k < len; ++k) {
      score *= std::uniform_real_distribution<double>(0.1, 1.0)(gen);
      r.predictions.push_back({"rel" + std::to_string(k), score});
    }
    records.push_back(r);
  }
  TempDir dir;
  save_prior_file(records, dir.file("p.jsonl"));
  auto prior = load_prior_file(dir.file("p.jsonl"));
  for (const auto& r : records) CHECK(prior->query(r.subject, r.object) == r);
}

TEST_CASE("co-occurrence: only observed relation ranks first") {
  Dataset d({make("man", "riding", "horse"), make("man", "riding", "horse"), make("man", "riding", "horse"),
             make("cat", "on", "mat"), make("dog", "near", "man")});
  auto prior = fit_cooccurrence(d);
  CHECK(prior.kind() == PriorKind::kCooccurrence);
  auto rec = prior.query("man", "horse");
  REQUIRE(!rec.predictions.empty());
  CHECK(rec.predictions[0].relation == "riding");
}

TEST_CASE("co-occurrence: backoff ranks a relation seen with the object for an unseen pair") {
  std::vector<Triple> raw{make("man", "flying", "kite"), make("man", "riding", "horse"), make("kid", "eating", "cake"),
                          make("dog", "on", "bed"), make("cat", "under", "table")};
  Dataset d(raw);
  auto prior = fit_cooccurrence(d, 0.1);
  const auto& rels = prior.relations().names();
  auto scores = prior.scores("kid", "kite");
  for (std::size_t r = 0; r < rels.size(); ++r) {
    CHECK(scores[r] == doctest::Approx(hand_score(raw, rels, 0.1, "kid", rels[r], "kite")).epsilon(1e-12));
  }
  auto rec = prior.query("kid", "kite");
  std::map<std::string, std::size_t> rank;
  for (std::size_t i = 0; i < rec.predictions.size(); ++i) rank[rec.predictions[i].relation] = i;
  for (const auto& r : {"riding", "on", "under"}) CHECK(rank.at("flying") < rank.at(r));
  check_record_invariants(rec, prior.top_k());
}

TEST_CASE("co-occurrence scores match the hand formula on random corpora") {
  std::mt19937 gen(12);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<Triple> raw;
    const int n = 20 + static_cast<int>(gen() % 80);
    for (int i = 0; i < n; ++i) {
      raw.push_back(make("s" + std::to_string(gen() % 5), "r" + std::to_string(gen() % 6), "o" + std::to_string(gen() % 5)));
    }
    const double alpha = 0.05 + 0.5 * (gen() % 10) / 10.0;
    Dataset d(raw);
    auto prior = fit_cooccurrence(d, alpha, 3);
    const auto& rels = prior.relations().names();
    for (int q = 0; q < 10; ++q) {
      const std::string s = "s" + std::to_string(gen() % 7), o = "o" + std::to_string(gen() % 7);
      auto sc = prior.scores(s, o);
      for (std::size_t r = 0; r < rels.size(); ++r) {
        CHECK(sc[r] == doctest::Approx(hand_score(raw, rels, alpha, s, rels[r], o)).epsilon(1e-12));
        CHECK(sc[r] > 0.0);
        CHECK(sc[r] <= 1.0);
      }
      auto rec = prior.query(s, o);
      CHECK(rec.predictions.size() == std::min<std::size_t>(3, rels.size()));
      check_record_invariants(rec, 3);
      CHECK(prior.query(s, o) == rec);
    }
  }
}

TEST_CASE("co-occurrence: adding a triple never lowers that relation's rank") {
  std::mt19937 gen(99);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<Triple> raw;
    for (int i = 0; i < 40; ++i) {
      raw.push_back(make("s" + std::to_string(gen() % 4), "r" + std::to_string(gen() % 5), "o" + std::to_string(gen() % 4)));
    }
    const Triple extra = raw[gen() % raw.size()];
    auto rank_of = [&](const std::vector<Triple>& data) {
      auto rec = fit_cooccurrence(Dataset(data), 0.1, 100).query(extra.subject.text, extra.object.text);
      for (std::size_t i = 0; i < rec.predictions.size(); ++i) {
        if (rec.predictions[i].relation == extra.relation) return i;
      }
      return rec.predictions.size();
    };
    const std::size_t before = rank_of(raw);
    raw.push_back(extra);
    CHECK(rank_of(raw) <= before);
  }
}

TEST_CASE("co-occurrence errors and export") {
  Dataset d({make("man", "riding", "horse"), make("Man", "on", "Horse"), make("cat", "on", "mat")});
  CHECK_THROWS_AS(fit_cooccurrence(d, 0.0), ValidationError);
  CHECK_THROWS_AS(fit_cooccurrence(d, -1.0), ValidationError);
  CHECK_THROWS_AS(fit_cooccurrence(Dataset()), ValidationError);
  auto prior = fit_cooccurrence(d, 0.1, 2);
  auto records = export_records(prior);
  REQUIRE(records.size() == 2);
  CHECK(records[0].subject == "man");
  CHECK(records[0].object == "horse");
  TempDir dir;
  save_prior_file(records, dir.file("p.jsonl"));
  auto file = load_prior_file(dir.file("p.jsonl"), 2);
  CHECK(file->query("man", "horse") == prior.query("man", "horse"));
}

namespace {

// In-process stand-in for the scoring service.
class StubService {
 public:
  using Handler = std::function<void(const json&, httplib::Response&)>;

  explicit StubService(Handler handler) : handler_(std::move(handler)) {
    server_.Post("/v1/predictions", [this](const httplib::Request& req, httplib::Response& res) {
      const int now = ++in_flight_;
      {
        std::lock_guard lock(mu_);
        max_in_flight_ = std::max(max_in_flight_, now);
      }
      ++requests_;
      handler_(json::parse(req.body), res);
      --in_flight_;
    });
    port_ = server_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }
  ~StubService() {
    server_.stop();
    thread_.join();
  }

  std::string endpoint() const { return "http://127.0.0.1:" + std::to_string(port_); }
  int requests() const { return requests_; }
  int max_in_flight() const {
    std::lock_guard lock(mu_);
    return max_in_flight_;
  }

 private:
  Handler handler_;
  httplib::Server server_;
  std::thread thread_;
  int port_ = 0;
  std::atomic<int> requests_{0};
  std::atomic<int> in_flight_{0};
  mutable std::mutex mu_;
  int max_in_flight_ = 0;
};

void respond(httplib::Response& res, const json& predictions) {
  res.set_content(json{{"predictions", predictions}, {"model_id", "stub"}, {"elapsed_ms", 1.0}}.dump(),
                  "application/json");
}

json ranked(std::size_t n) {
  json p = json::array();
  for (std::size_t i = 0; i < n; ++i) {
    p.push_back({{"relation", "rel" + std::to_string(i)}, {"score", 1.0 / static_cast<double>(i + 1)}});
  }
  return p;
}

RemoteOptions fast_options() {
  RemoteOptions o;
  o.initial_backoff = std::chrono::milliseconds(1);
  o.timeout = std::chrono::seconds(5);
  return o;
}

}  // namespace

TEST_CASE("remote prior sends the request schema and accepts responses") {
  json seen;
  StubService stub([&](const json& req, httplib::Response& res) {
    seen = req;
    respond(res, ranked(req.at("top_k").get<std::size_t>()));
  });
  auto rec = query_remote(stub.endpoint(), "man", "horse", 20, fast_options());
  CHECK(rec.predictions.size() == 20);
  CHECK(seen == json{{"subject", "man"}, {"object", "horse"}, {"top_k", 20}});
  CHECK(rec.subject == "man");

  RemotePrior prior(stub.endpoint(), 5, fast_options());
  CHECK(prior.kind() == PriorKind::kRemote);
  CHECK(prior.query("man", "horse").predictions.size() == 5);
}

TEST_CASE("remote prior accepts short responses") {
  StubService stub([](const json&, httplib::Response& res) { respond(res, ranked(3)); });
  CHECK(query_remote(stub.endpoint(), "man", "horse", 20, fast_options()).predictions.size() == 3);
}

TEST_CASE("remote prior schema violations are provider errors") {
  const std::vector<json> bodies{
      json::array({{{"relation", "on"}, {"score", -0.5}}}),
      json::array({{{"relation", "on"}, {"score", 0.1}}, {{"relation", "in"}, {"score", 0.4}}}),
      json::array({{{"relation", "on"}}}),
      json::array({{{"score", 0.3}}}),
      json::array({{{"relation", "on"}, {"score", "high"}}}),
      ranked(21),
  };
  for (const auto& body : bodies) {
    StubService stub([&](const json&, httplib::Response& res) { respond(res, body); });
    CHECK_THROWS_WITH_AS(query_remote(stub.endpoint(), "man", "horse", 20, fast_options()),
                         doctest::Contains("schema violation"), ProviderError);
    CHECK(stub.requests() == 1);
  }
  StubService garbage([](const json&, httplib::Response& res) { res.set_content("not json", "text/plain"); });
  CHECK_THROWS_AS(query_remote(garbage.endpoint(), "man", "horse", 20, fast_options()), ProviderError);
  StubService no_list([](const json&, httplib::Response& res) { res.set_content("{}", "application/json"); });
  CHECK_THROWS_AS(query_remote(no_list.endpoint(), "man", "horse", 20, fast_options()), ProviderError);
}

TEST_CASE("remote prior retries transient failures") {
  std::atomic<int> calls{0};
  StubService flaky([&](const json&, httplib::Response& res) {
    if (++calls <= 2) {
      res.status = calls == 1 ? 503 : 429;
      return;
    }
    respond(res, ranked(4));
  });
  CHECK(query_remote(flaky.endpoint(), "man", "horse", 20, fast_options()).predictions.size() == 4);
  CHECK(flaky.requests() == 3);

  StubService down([](const json&, httplib::Response& res) { res.status = 500; });
  CHECK_THROWS_WITH_AS(query_remote(down.endpoint(), "man", "horse", 20, fast_options()),
                       doctest::Contains("unavailable"), ProviderError);
  CHECK(down.requests() == 4);

  StubService rejects([](const json&, httplib::Response& res) { res.status = 422; });
  CHECK_THROWS_AS(query_remote(rejects.endpoint(), "man", "horse", 20, fast_options()), ProviderError);
  CHECK(rejects.requests() == 1);
}

TEST_CASE("remote prior reports an unreachable service") {
  int port = 0;
  {
    httplib::Server probe;
    port = probe.bind_to_any_port("127.0.0.1");
  }
  auto opts = fast_options();
  opts.timeout = std::chrono::seconds(1);
  CHECK_THROWS_AS(query_remote("http://127.0.0.1:" + std::to_string(port), "man", "horse", 20, opts), ProviderError);
}

TEST_CASE("remote prior caps concurrent requests") {
  StubService slow([](const json&, httplib::Response& res) {
    std::this_thread::sleep_for(std::chrono::milliseconds(30));
    respond(res, ranked(2));
  });
  auto opts = fast_options();
  opts.max_in_flight = 2;
  RemotePrior prior(slow.endpoint(), 20, opts);
  std::vector<std::thread> threads;
  std::atomic<int> ok{0};
  for (int i = 0; i < 8; ++i) {
    threads.emplace_back([&] {
      if (prior.query("man", "horse").predictions.size() == 2) ++ok;
    });
  }
  for (auto& t : threads) t.join();
  CHECK(ok == 8);
  CHECK(slow.max_in_flight() <= 2);
  CHECK(slow.requests() == 8);
}

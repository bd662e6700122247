#include <doctest.h>

#include <fstream>
#include <sstream>

#include "stackdetect/harness.hpp"
#include "support/synth.hpp"

using namespace stackdetect;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void spit(const fs::path& p, const std::string& s) {
    std::ofstream out(p, std::ios::binary);
    out << s;
}

json base_config(const std::string& out_dir) {
    return json{{"name", "planted"},
                {"seed", 5},
                {"output_dir", out_dir},
                {"corpus", {{"paths", {"corpus.jsonl"}}}},
                {"scorers",
                 {{{"id", "ngram"}, {"kind", "ngram_lr"}, {"epochs", 100}},
                  {{"id", "ppl"}, {"kind", "perplexity"}}}},
                {"ensemble", {{"rf", {{"n_trees", 20}}}}},
                {"evaluation", {{"category_field", "domain"}}}};
}

struct Workspace {
    fs::path dir = synth::temp_dir("harness");
    Workspace() { save_corpus(synth::planted_corpus(500, 31), dir / "corpus.jsonl"); }
    ~Workspace() { fs::remove_all(dir); }
    fs::path write_config(const json& cfg, const std::string& name = "config.json") const {
        spit(dir / name, cfg.dump(2));
        return dir / name;
    }
};

EnsembleModel uniform_model(const std::string& scorer_id) {
    EnsembleModel m;
    m.manifest = {scorer_id};
    m.standardizer = {{0, 0}, {1, 1}};
    m.lr.weights = {0, 0};
    m.gnb.prior = {0.5, 0.5};
    m.gnb.mean = {std::vector<double>{0, 0}, std::vector<double>{0, 0}};
    m.gnb.var = {std::vector<double>{1, 1}, std::vector<double>{1, 1}};
    m.rf.trees.push_back(DecisionTree{{TreeNode{-1, 0, -1, -1, 0.5}}});
    m.svm.weights = {0, 0};
    return m;
}

}  // namespace

TEST_CASE("overrides and fingerprints") {
    json doc{{"a", {{"b", 1}}}, {"list", {1, 2}}};
    apply_override(doc, "a.b=2.5");
    apply_override(doc, "a.c=hello");
    apply_override(doc, "list.1=7");
    apply_override(doc, "x.y.z=true");
    CHECK(doc["a"]["b"] == 2.5);
    CHECK(doc["a"]["c"] == "hello");
    CHECK(doc["list"][1] == 7);
    CHECK(doc["x"]["y"]["z"] == true);
    CHECK_THROWS_AS(apply_override(doc, "novalue"), ValidationError);
    CHECK_THROWS_AS(apply_override(doc, "list.9=1"), ValidationError);

    Workspace ws;
    const auto p1 = ws.write_config(base_config("out"), "a.json");
    const auto p2 = ws.write_config(base_config("out"), "b.json");
    json changed = base_config("out");
    changed["seed"] = 6;
    const auto p3 = ws.write_config(changed, "c.json");
    const auto c1 = load_config(p1);
    CHECK(c1.fingerprint == load_config(p2).fingerprint);
    CHECK(c1.fingerprint != load_config(p3).fingerprint);
    const auto over = load_config(p1, {"seed=9"});
    CHECK(over.seed == 9);
    CHECK(over.fingerprint != c1.fingerprint);
    CHECK(c1.output_dir == ws.dir / "out");
    CHECK(c1.scorers[0].params["epochs"] == 100);
    CHECK(c1.category_field == CategoryField::Domain);
}

TEST_CASE("validation happens before any work") {
    Workspace ws;
    json cfg = base_config("out");
    cfg["scorers"].push_back({{"id", "roberta"}, {"kind", "file"}, {"path", "missing.jsonl"}});
    const auto cfg_path = ws.write_config(cfg);
    try {
        run_experiment(load_config(cfg_path));
        FAIL("expected a validation error");
    } catch (const ValidationError& e) {
        CHECK(std::string(e.what()).find("missing.jsonl") != std::string::npos);
    }
    CHECK_FALSE(fs::exists(ws.dir / "out"));

    json dup = base_config("out");
    dup["scorers"].push_back({{"id", "ppl"}, {"kind", "perplexity"}});
    CHECK_THROWS_AS(load_config(ws.write_config(dup)).validate(), ValidationError);
    json bad_kind = base_config("out");
    bad_kind["scorers"][0]["kind"] = "oracle";
    CHECK_THROWS_AS(load_config(ws.write_config(bad_kind)).validate(), ValidationError);
    CHECK_THROWS_AS(load_config(ws.dir / "nope.json"), ValidationError);
}

TEST_CASE("output directory lock") {
    Workspace ws;
    OutputLock first(ws.dir / "locked");
    CHECK_THROWS_AS(OutputLock(ws.dir / "locked"), std::runtime_error);
}

TEST_CASE("curation stage reproduces the D1 train size") {
    Workspace ws;
    save_corpus(synth::table2_corpus(), ws.dir / "autext.jsonl");
    json cfg = base_config("d1");
    cfg["corpus"] = {{"paths", {"autext.jsonl"}}};
    cfg["curation"] = {{{"op", "remove"}, {"generators", {"babbage", "curie", "text-davinci-003"}}, {"splits", {"train"}}}};
    const Corpus d1 = stage_curate(load_config(ws.write_config(cfg)));
    CHECK(corpus_stats(d1).split_size(Split::Train) == 25309);
    const json stats = json::parse(slurp(ws.dir / "d1" / artifact::kStats));
    CHECK(stats["stats"]["train"]["total"] == 25309);
    CHECK(stats["provenance"].size() == 2);

    cfg["curation"] = json::array();
    const Corpus raw = stage_curate(load_config(ws.write_config(cfg)));
    CHECK(corpus_stats(raw).by_generator == corpus_stats(synth::table2_corpus()).by_generator);
}

TEST_CASE("full pipeline: determinism, zero-shot consistency, detect") {
    // identical config bytes and inputs in two separate workspaces
    Workspace ws, twin;
    json cfg = base_config("out");
    cfg["zero_shot"] = {{{"name", "essays"}, {"path", "essays.jsonl"}}};
    for (const Workspace* w : {&ws, &twin}) {
        save_corpus(synth::essay_corpus(31), w->dir / "essays.jsonl");
        w->write_config(cfg);
    }
    const auto cfg1 = load_config(ws.dir / "config.json");
    const auto cfg2 = load_config(twin.dir / "config.json");
    CHECK(cfg1.fingerprint == cfg2.fingerprint);
    const auto r1 = run_experiment(cfg1);
    run_experiment(cfg2);

    CHECK(r1.report["test"]["acc"].get<double>() >= 0.85);
    CHECK(slurp(ws.dir / "out" / artifact::kModel) == slurp(twin.dir / "out" / artifact::kModel));
    CHECK(slurp(ws.dir / "out" / artifact::kReport) == slurp(twin.dir / "out" / artifact::kReport));
    const json a = json::parse(slurp(ws.dir / "out" / artifact::kReport));
    CHECK(a["manifest"] == json{"ngram", "ppl"});
    CHECK(a["oof_folds"] == 5);
    CHECK(a["zero_shot"]["essays"]["n"] == 746);
    CHECK(a["zero_shot"]["essays"]["per_category"]["categories"].contains("toefl"));
    CHECK(fs::exists(ws.dir / "out" / artifact::kManifest));
    CHECK_FALSE(fs::exists(ws.dir / "out" / artifact::kLock));
    CHECK(slurp(ws.dir / "out" / artifact::kReportTable).find("| planted ") != std::string::npos);
    const json b = json::parse(slurp(twin.dir / "out" / artifact::kReport));

    // the saved model re-evaluated on its own test split matches the report
    const Corpus curated = load_corpus(twin.dir / "out" / artifact::kCorpus);
    save_corpus(curated.filter_split(Split::Test), twin.dir / "test_only.jsonl");
    const auto scorers = load_scorers(twin.dir / "out" / artifact::kScorerDir);
    const auto ptrs = raw_pointers(scorers);
    const EvalReport zs = zero_shot_eval(twin.dir / "out" / artifact::kModel, twin.dir / "test_only.jsonl", ptrs);
    CHECK(zs.to_json() == b["test"]);

    std::vector<const Scorer*> swapped{ptrs[1], ptrs[0]};
    try {
        zero_shot_eval(twin.dir / "out" / artifact::kModel, twin.dir / "test_only.jsonl", swapped);
        FAIL("expected a manifest mismatch");
    } catch (const ValidationError& e) {
        CHECK(std::string(e.what()).find("[ngram, ppl]") != std::string::npos);
        CHECK(std::string(e.what()).find("[ppl, ngram]") != std::string::npos);
    }

    const EnsembleModel model = EnsembleModel::load(twin.dir / "out" / artifact::kModel);
    const std::string text = curated.samples()[0].text;
    CHECK(verdict_to_json(detect(model, ptrs, text)) == verdict_to_json(detect(model, ptrs, text)));
    CHECK_THROWS_AS(detect(model, ptrs, "  \n"), ValidationError);

    // stage isolation: individual stages reproduce the run's artifacts
    fs::remove_all(twin.dir / "out");
    stage_curate(cfg2);
    stage_train_scorers(cfg2);
    stage_score(cfg2);
    stage_train_ensemble(cfg2);
    stage_evaluate(cfg2);
    CHECK(slurp(ws.dir / "out" / artifact::kModel) == slurp(twin.dir / "out" / artifact::kModel));
    CHECK(slurp(ws.dir / "out" / artifact::kReport) == slurp(twin.dir / "out" / artifact::kReport));
}

TEST_CASE("stages report missing inputs") {
    Workspace ws;
    const auto cfg = load_config(ws.write_config(base_config("empty")));
    CHECK_THROWS_AS(stage_score(cfg), ValidationError);
    CHECK_THROWS_AS(stage_train_ensemble(cfg), ValidationError);
}

TEST_CASE("in-sample and 3-fold stacking variants run") {
    Workspace ws;
    json cfg = base_config("oof");
    cfg["ensemble"]["oof"] = 3;
    const auto r = run_experiment(load_config(ws.write_config(cfg)));
    CHECK(r.report["oof_folds"] == 3);
    CHECK(r.report["test"]["acc"].get<double>() >= 0.85);
    cfg["output_dir"] = "insample";
    cfg["ensemble"]["oof"] = 0;
    CHECK(run_experiment(load_config(ws.write_config(cfg, "in.json"))).report["oof_folds"] == 0);
    cfg["ensemble"]["oof"] = 1;
    CHECK_THROWS_AS(load_config(ws.write_config(cfg, "bad.json")).validate(), ValidationError);
}

TEST_CASE("detect: tie rule and scorer requirements") {
    const NgramLrScorer ng("ng", {}, {}, {}, {}, 0.0);
    const EnsembleModel m = uniform_model("ng");
    const std::vector<const Scorer*> scorers{&ng};
    const Verdict v = detect(m, scorers, "any text at all");
    CHECK(v.label == Label::Human);
    CHECK(v.prob == ProbVector{0.5, 0.5});
    const json j = verdict_to_json(v);
    CHECK(j["label"] == "human");
    CHECK(j["per_learner"].size() == 4);

    const FileScorer file("ng");
    const std::vector<const Scorer*> files{&file};
    try {
        detect(m, files, "text");
        FAIL("expected an error");
    } catch (const ValidationError& e) {
        CHECK(std::string(e.what()).find("file") != std::string::npos);
    }
}

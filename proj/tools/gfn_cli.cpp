#include <chrono>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "gfn/baselines.hpp"
#include "gfn/data.hpp"
#include "gfn/envs.hpp"
#include "gfn/exact_eval.hpp"
#include "gfn/trainer.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace gfn;

namespace {

constexpr const char* kVersion = "0.1.0";

struct ArgError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

// ---- manifest ------------------------------------------------------------------

std::string fnv1a(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot read " + path);
    std::uint64_t h = 0xcbf29ce484222325ULL;
    char c;
    while (f.get(c)) h = (h ^ std::uint8_t(c)) * 0x100000001b3ULL;
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

std::map<std::string, std::string> effective_config(const CLI::App& sub) {
    std::map<std::string, std::string> kv;
    for (const CLI::Option* o : sub.get_options()) {
        if (o->get_lnames().empty()) continue;
        const std::string& name = o->get_lnames().front();
        if (name == "help" || name == "config") continue;
        if (o->count()) {
            auto r = o->reduced_results();
            kv[name] = r.empty() ? "" : r.back();
        } else {
            kv[name] = o->get_default_str();
        }
    }
    return kv;
}

struct Run {
    std::string command;
    std::map<std::string, std::string> config;
    std::uint64_t seed = 0;
    fs::path out;
    std::map<std::string, std::string> inputs;  // path -> digest
    std::chrono::steady_clock::time_point start = std::chrono::steady_clock::now();

    void input(const std::string& path) { inputs[path] = fnv1a(path); }
    std::string file(const std::string& name) const { return (out / name).string(); }

    void finish(const json& summary) const {
        json m;
        m["command"] = command;
        m["config"] = config;
        m["seed"] = seed;
        m["version"] = kVersion;
        m["inputs"] = inputs;
        m["wall_clock_s"] = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        m["summary"] = summary;
        std::ofstream f(file("manifest.json"));
        f << m.dump(2) << "\n";
        if (!f) throw std::runtime_error("cannot write manifest");
    }
};

// ---- shared inputs -------------------------------------------------------------

// flags record their default so the manifest lists every switch
void flag(CLI::App* c, const std::string& name, bool& var, const std::string& desc) {
    c->add_flag(name, var, desc)->default_str(var ? "true" : "false");
}

struct ScoreOpts {
    std::string data, kind = "continuous", score = "bge";
    int d = 0, arity = 0;
    bool standardize = false;
    double edge_penalty = 0.0;
};

void add_score_opts(CLI::App* c, ScoreOpts& s) {
    c->add_option("--data", s.data, "dataset CSV");
    c->add_option("--kind", s.kind, "dataset kind")->check(CLI::IsMember({"continuous", "categorical"}));
    c->add_option("--score", s.score, "local score")->check(CLI::IsMember({"bge", "bde", "uniform"}));
    c->add_option("--d", s.d, "node count when no dataset is given")->check(CLI::Range(0, 64));
    c->add_option("--arity", s.arity, "categorical arity, 0 to infer")->check(CLI::NonNegativeNumber);
    flag(c, "--standardize", s.standardize, "zero-mean, unit-variance columns before scoring");
    c->add_option("--edge-penalty", s.edge_penalty, "log prior penalty per edge")->check(CLI::NonNegativeNumber);
}

struct Scored {
    int d = 0;
    std::shared_ptr<LocalScoreCache> cache;
    GraphPrior prior;
};

Scored load_score(const ScoreOpts& s, Run& run) {
    Scored out;
    out.prior.edge_penalty = s.edge_penalty;
    if (s.score == "uniform") {
        out.d = s.d;
        if (!s.data.empty()) {
            run.input(s.data);
            out.d = read_csv(s.data, s.kind == "categorical" ? Dataset::Kind::categorical : Dataset::Kind::continuous).d;
        }
        if (out.d < 1) throw ArgError("the uniform score needs --d or --data");
        out.cache = std::make_shared<LocalScoreCache>(std::make_shared<UniformScore>(out.d));
        return out;
    }
    if (s.data.empty()) throw ArgError("--data is required for the " + s.score + " score");
    run.input(s.data);
    auto kind = s.kind == "categorical" ? Dataset::Kind::categorical : Dataset::Kind::continuous;
    Dataset ds = read_csv(s.data, kind, s.arity);
    out.d = ds.d;
    if (s.score == "bge") {
        if (kind != Dataset::Kind::continuous) throw ArgError("BGe needs continuous data");
        out.cache = std::make_shared<LocalScoreCache>(std::make_shared<BgeScore>(s.standardize ? standardize(ds) : ds));
    } else {
        if (kind != Dataset::Kind::categorical) throw ArgError("BDe needs categorical data (--kind categorical)");
        out.cache = std::make_shared<LocalScoreCache>(std::make_shared<BdeScore>(ds, BdeHyper{1.0, s.arity}));
    }
    return out;
}

DagState read_edge_list(const std::string& path, int d) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("cannot read " + path);
    std::vector<std::pair<int, int>> edges;
    std::string tok;
    while (f >> tok) {
        auto arrow = tok.find("->");
        if (arrow == std::string::npos) throw std::runtime_error(path + ": expected u->v, got '" + tok + "'");
        edges.push_back({std::stoi(tok.substr(0, arrow)), std::stoi(tok.substr(arrow + 2))});
    }
    return dag_from_edges(d, edges);
}

void write_matrix(const std::string& path, const std::vector<double>& m, int d) {
    std::ofstream f(path);
    f.precision(17);
    for (int i = 0; i < d; ++i) {
        for (int j = 0; j < d; ++j) f << (j ? "," : "") << m[std::size_t(i) * d + j];
        f << "\n";
    }
}

std::set<std::string> split_set(const std::string& s) {
    std::set<std::string> out;
    std::stringstream in(s);
    std::string t;
    while (std::getline(in, t, ','))
        if (!t.empty()) out.insert(t);
    return out;
}

// ---- metrics shared by evaluate and baseline ------------------------------------

struct MetricOpts {
    std::string truth, features = "edge,path,markov";
};

void add_metric_opts(CLI::App* c, MetricOpts& m) {
    c->add_option("--truth", m.truth, "ground-truth edge list for E-SHD and AUROC");
    c->add_option("--features", m.features, "comma-separated subset of edge,path,markov");
}

json report_distribution(const std::map<std::string, double>& dist, const std::vector<DagState>& samples, int d,
                         const MetricOpts& mo, const Scored& sc, const Run& run) {
    json out;
    auto feats = features(dist, d);
    auto want = split_set(mo.features);
    for (auto& w : want)
        if (w != "edge" && w != "path" && w != "markov") throw ArgError("unknown feature '" + w + "'");
    if (want.count("edge")) write_matrix(run.file("features_edge.csv"), feats.edge, d);
    if (want.count("path")) write_matrix(run.file("features_path.csv"), feats.path, d);
    if (want.count("markov")) write_matrix(run.file("features_markov.csv"), feats.markov, d);
    if (d <= kMaxEnumerableNodes) {
        auto sp = dag_space(d);
        auto post = exact_posterior(sp, *sc.cache, sc.prior).probs();
        std::vector<double> p(sp.keys.size(), 0.0);
        for (auto& [k, v] : dist) {
            int i = sp.find(k);
            if (i >= 0) p[i] = v;
        }
        out["jsd"] = jsd(p, post);
    }
    if (!mo.truth.empty()) {
        DagState g = read_edge_list(mo.truth, d);
        auto m = structural_metrics(samples, g, feats.edge);
        out["e_shd"] = m.e_shd;
        out["auroc"] = std::isnan(m.auroc) ? json(nullptr) : json(m.auroc);
    }
    return out;
}

void write_json(const std::string& path, const json& j) {
    std::ofstream f(path);
    f << j.dump(2) << "\n";
}

// ---- gen-data ------------------------------------------------------------------

struct GenOpts {
    int d = 5, n = 100, arity = 2;
    double er = 1.0, noise = 0.01;
    std::string kind = "lingauss";
};

json cmd_gen_data(const GenOpts& o, Run& run) {
    if (o.d < 1) throw ArgError("--d must be at least 1");
    if (o.n < 1) throw ArgError("--n must be at least 1");
    Rng rng(run.seed, 0x67656e);
    DagState g = sample_er_dag(o.d, o.er, rng);
    Dataset ds;
    std::map<std::string, std::string> meta{{"seed", std::to_string(run.seed)},
                                            {"d", std::to_string(o.d)},
                                            {"n", std::to_string(o.n)},
                                            {"er", std::to_string(o.er)},
                                            {"kind", o.kind},
                                            {"g_star", edge_list(g)}};
    if (o.kind == "lingauss") {
        auto bn = sample_lingauss_bn(g, rng, o.noise);
        ds = ancestral_sample(bn, o.n, rng);
        meta["noise_var"] = std::to_string(o.noise);
    } else {
        auto bn = sample_discrete_bn(g, o.arity, rng);
        ds = ancestral_sample(bn, o.n, rng);
        meta["arity"] = std::to_string(o.arity);
    }
    write_csv(run.file("data.csv"), ds);
    {
        std::ofstream f(run.file("truth.txt"));
        f << edge_list(g) << "\n";
    }
    write_metadata(run.file("data.meta"), meta);
    return {{"edges", g.num_edges()}, {"g_star", edge_list(g)}};
}

// ---- train ---------------------------------------------------------------------

struct TrainOpts {
    std::string env = "dag", loss = "tb", policy = "tabular";
    int hidden = 64, workers = 1;
    bool exact_eval = false, huber = false;
    ScoreOpts score;
    TrainConfig cfg;
};

std::unique_ptr<ExplicitEnv> fixture_env(const std::string& name) {
    if (name.rfind("galton", 0) == 0) {
        int rows = 0;
        try {
            rows = std::stoi(name.substr(6));
        } catch (const std::exception&) {
            throw ArgError("galton envs are named galton<rows>, e.g. galton2");
        }
        return std::make_unique<ExplicitEnv>(galton_env(rows, 0.5).env);
    }
    if (name.rfind("file:", 0) == 0) {
        std::ifstream f(name.substr(5));
        if (!f) throw ArgError("cannot read env file " + name.substr(5));
        std::stringstream ss;
        ss << f.rdbuf();
        return std::make_unique<ExplicitEnv>(explicit_env(ss.str()));
    }
    if (name == "markov" || name == "multipath" || name == "subtb")
        return std::make_unique<ExplicitEnv>(explicit_env(fixture_text(name)));
    throw ArgError("unknown env '" + name + "'; valid: dag, galton<rows>, markov, multipath, subtb, file:<path>");
}

void write_trace(const std::string& path, const std::vector<double>& trace, const std::map<long, double>& jsds) {
    std::ofstream f(path);
    f.precision(10);
    f << "step,mean_abs_residual,jsd\n";
    for (std::size_t i = 0; i < trace.size(); ++i) {
        long step = long(i) + 1;
        f << step << "," << trace[i] << ",";
        auto it = jsds.find(step);
        if (it != jsds.end()) f << it->second;
        f << "\n";
    }
}

json train_fixture(TrainOpts& o, Run& run) {
    auto env = fixture_env(o.env);
    if (o.cfg.alpha != 1.0) env = std::make_unique<ExplicitEnv>(env->tempered(o.cfg.alpha));
    auto rewards = env->rewards();
    double Z = 0;
    for (auto& [s, r] : rewards) Z += r;
    TabularPolicy pol(*env);
    ForwardPolicy pf;
    json summary;
    if (o.loss == "tb" || o.loss == "reverse-kl") {
        FlatModel model(pol);
        auto r = train_tb(*env, model, uniform_backward_policy(*env), o.cfg);
        write_trace(run.file("trace.csv"), r.trace, {});
        pf = pol.forward();
        summary["log_z"] = r.logZ;
        std::ofstream f(run.file("policy.csv"));
        f.precision(17);
        f << "state,next,log_prob\n";
        for (auto& s : enumerate_env(*env).states)
            for (auto& out : pf(s)) f << s.key << "," << (out.next.terminal ? "<stop>" : out.next.key) << "," << out.logp << "\n";
    } else if (o.loss == "sql") {
        auto E = [&env](const StateId& s) { return env->energy(s); };
        auto rw = corrected_reward(*env, uniform_backward_policy(*env), E, o.cfg.alpha, RewardScheme::sparse);
        auto r = train_sql(*env, rw, o.cfg);
        pf = r.table.policy();
        std::ofstream f(run.file("q_table.csv"));
        f.precision(17);
        f << "state,next,q\n";
        for (std::size_t s = 0; s < r.table.en->size(); ++s) {
            auto acts = r.table.actions(int(s));
            for (std::size_t a = 0; a < acts.size(); ++a)
                f << r.table.en->states[s].key << "," << (acts[a].terminal ? "<stop>" : acts[a].key) << ","
                  << r.table.q[s][a] << "\n";
        }
    } else {
        throw ArgError("loss '" + o.loss + "' needs --env dag");
    }
    auto dist = terminating_distribution_dp(*env, pf);
    std::ofstream f(run.file("distribution.csv"));
    f.precision(17);
    f << "state,learned,target\n";
    double worst = 0;
    for (auto& [s, p] : dist) {
        double t = rewards.at(s) / Z;
        worst = std::max(worst, std::abs(p - t));
        f << s.key << "," << p << "," << t << "\n";
    }
    summary["max_abs_error"] = worst;
    return summary;
}

json train_dag(TrainOpts& o, Run& run) {
    Scored sc = load_score(o.score, run);
    auto cache = sc.cache;
    auto prior = sc.prior;
    DagEnv env(sc.d, [cache, prior](const DagState& g) { return log_reward(g, *cache, prior); });
    std::unique_ptr<DagPolicy> pol;
    if (o.policy == "tabular") pol = std::make_unique<DagTabularPolicy>(sc.d);
    else pol = std::make_unique<MlpPolicy>(sc.d, o.hidden, Rng(run.seed, 0x6d6c70)());

    std::map<long, double> jsds;
    Monitor mon;
    std::unique_ptr<DagSpace> sp;
    std::vector<double> post;
    if (o.exact_eval) {
        if (sc.d > kMaxEnumerableNodes) throw ArgError("--exact-eval needs d <= 5");
        sp = std::make_unique<DagSpace>(dag_space(sc.d));
        post = exact_posterior(*sp, *cache, prior).probs();
        mon = [&](long step) {
            std::vector<double> p;
            for (double x : space_log_terminating(*sp, tabulate_policy(*sp, *pol))) p.push_back(std::exp(x));
            jsds[step] = jsd(p, post);
        };
    }
    json summary;
    double logZ = 0;
    if (o.loss == "modified-db") {
        auto r = train_modified_db(env, *cache, prior, *pol, o.cfg, mon);
        write_trace(run.file("trace.csv"), r.trace, jsds);
        summary["target_syncs"] = r.target_syncs;
    } else if (o.loss == "tb" || o.loss == "reverse-kl") {
        auto r = train_tb_dag(env, *pol, o.cfg, mon);
        write_trace(run.file("trace.csv"), r.trace, jsds);
        logZ = r.logZ;
        summary["log_z"] = logZ;
    } else {
        throw ArgError("loss '" + o.loss + "' is only available on fixture envs");
    }
    if (!jsds.empty()) summary["final_jsd"] = jsds.rbegin()->second;
    save_checkpoint(run.file("policy"), *pol, logZ, o.cfg.steps, run.seed);
    return summary;
}

json cmd_train(TrainOpts& o, Run& run) {
    if (o.workers < 1) throw ArgError("--workers must be at least 1");
    o.cfg.seed = run.seed;
    if (o.huber) o.cfg.loss.kind = LossKind::huber;
    if (o.loss == "reverse-kl") {
        o.cfg.objective = Objective::reverse_kl;
        o.cfg.on_policy = true;
    }
    try {
        o.cfg.validate();
    } catch (const std::invalid_argument& e) {
        throw ArgError(e.what());
    }
    return o.env == "dag" ? train_dag(o, run) : train_fixture(o, run);
}

// ---- evaluate ------------------------------------------------------------------

struct EvalOpts {
    std::string checkpoint;
    int samples = 1000, beam = 10, mc = 100;
    ScoreOpts score;
    MetricOpts metrics;
};

std::vector<DagState> sample_policy(DagPolicy& pol, const DagEnv& env, int n, Rng& rng) {
    DagModel model(pol, env);
    auto pf = model.forward();
    std::vector<DagState> out;
    for (int i = 0; i < n; ++i) out.push_back(env.state(sample_trajectory(env, pf, rng).last_state()));
    return out;
}

json cmd_evaluate(const EvalOpts& o, Run& run) {
    if (o.checkpoint.empty()) throw ArgError("--checkpoint is required");
    run.input(o.checkpoint + ".bin");
    run.input(o.checkpoint + ".manifest");
    auto pol = load_checkpoint(o.checkpoint);
    Scored sc = load_score(o.score, run);
    if (sc.d != pol->d()) throw ArgError("checkpoint and dataset disagree on the node count");
    int d = sc.d;
    auto cache = sc.cache;
    auto prior = sc.prior;
    DagEnv env(d, [cache, prior](const DagState& g) { return log_reward(g, *cache, prior); });
    Rng rng(run.seed, 0x6576616c);
    auto samples = sample_policy(*pol, env, o.samples, rng);

    std::map<std::string, double> dist;
    if (d <= kMaxEnumerableNodes) {
        auto sp = dag_space(d);
        auto lt = space_log_terminating(sp, tabulate_policy(sp, *pol));
        for (std::size_t i = 0; i < sp.keys.size(); ++i) dist[sp.keys[i]] = std::exp(lt[i]);
    } else {
        for (auto& g : samples) dist[canonical_key(g)] += 1.0 / samples.size();
    }
    json out = report_distribution(dist, samples, d, o.metrics, sc, run);

    auto pf = hier_fn(*pol);
    std::set<std::string> seen;
    std::vector<std::pair<double, double>> pairs;
    std::ofstream f(run.file("correlation.csv"));
    f.precision(17);
    f << "key,log_p_hat,log_reward\n";
    for (auto& g : samples) {
        auto k = canonical_key(g);
        if (!seen.insert(k).second) continue;
        auto e = estimate_log_pftop(pf, g, o.beam, o.mc, rng);
        double lr = log_reward(g, *cache, prior);
        pairs.push_back({e.log_p, lr});
        f << key_hex(k) << "," << e.log_p << "," << lr << "\n";
    }
    if (pairs.size() >= 3) {
        try {
            auto c = correlation_report(pairs);
            out["correlation"] = {{"slope", c.slope}, {"intercept", c.intercept}, {"r", c.r},
                                  {"trimmed_slope", c.trimmed_slope}, {"trimmed_r", c.trimmed_r}, {"n", c.n}};
        } catch (const std::invalid_argument&) {
            out["correlation"] = nullptr;
        }
    }
    write_json(run.file("metrics.json"), out);
    return out;
}

// ---- baseline ------------------------------------------------------------------

struct BaselineOpts {
    bool mc3 = true, reversals = true;
    long steps = 100000, thin = 10;
    double burn = 0.1;
    ScoreOpts score;
    MetricOpts metrics;
};

json cmd_baseline(const BaselineOpts& o, Run& run) {
    if (!o.mc3) throw ArgError("the only baseline is --mc3");
    if (o.steps <= 0) throw ArgError("--steps must be positive");
    Scored sc = load_score(o.score, run);
    Mc3Options opt;
    opt.chain.steps = o.steps;
    opt.chain.thin = o.thin;
    opt.chain.burn_frac = o.burn;
    opt.reversals = o.reversals;
    Rng rng(run.seed, 0x6d6333);
    ChainTrace tr;
    try {
        tr = structure_mc3(*sc.cache, sc.prior, sc.d, opt, rng);
    } catch (const std::invalid_argument& e) {
        throw ArgError(e.what());
    }
    tr.write_csv(run.file("chain.csv"));
    if (tr.states.empty()) throw std::runtime_error("no samples kept after burn-in and thinning");
    std::map<std::string, double> dist;
    std::vector<DagState> samples;
    for (auto& k : tr.states) {
        dist[k] += 1.0 / tr.states.size();
        samples.push_back(dag_from_key(k, sc.d));
    }
    json out = report_distribution(dist, samples, sc.d, o.metrics, sc, run);
    out["acceptance_rate"] = tr.acceptance_rate();
    out["kept"] = tr.states.size();
    write_json(run.file("metrics.json"), out);
    return out;
}

// ---- enumerate -----------------------------------------------------------------

struct EnumOpts {
    ScoreOpts score;
    bool policy_out = false;
};

json cmd_enumerate(const EnumOpts& o, Run& run) {
    Scored sc = load_score(o.score, run);
    if (sc.d > kMaxEnumerableNodes) throw ArgError("enumeration needs d <= 5");
    auto sp = dag_space(sc.d);
    auto logR = space_log_rewards(sp, *sc.cache, sc.prior);
    auto post = posterior_from_log_rewards(sp, logR);
    post.write(run.file("posterior.txt"));
    json out{{"dags", sp.dags.size()}, {"transitions", sp.transitions()}, {"log_evidence", post.log_evidence}};
    if (o.policy_out) {
        // the exact forward policy under a uniform backward policy, stored as tabular logits
        auto solved = solve_forward_policy(sp, logR, uniform_space_log_pb(sp));
        DagTabularPolicy pol(sc.d);
        int dd = sc.d * sc.d;
        for (std::size_t i = 0; i < sp.dags.size(); ++i) {
            int off = pol.offset(sp.dags[i]);
            const HierDist& h = solved[i];
            if (h.forced_stop) continue;
            double log_cont = std::log1p(-std::exp(h.log_stop));
            pol.params()[off] = h.log_stop - log_cont;
            for (int e = 0; e < dd; ++e)
                pol.params()[off + 1 + e] = std::isfinite(h.log_edge[e]) ? h.log_edge[e] - log_cont : 0.0;
        }
        save_checkpoint(run.file("exact_policy"), pol, post.log_evidence, 0, run.seed);
    }
    return out;
}

// ---- driver --------------------------------------------------------------------

// key=value lines from --config become --key=value flags placed before the user's flags, so flags win
std::vector<std::string> merge_config(std::vector<std::string> args) {
    std::string path;
    std::vector<std::string> rest;
    for (std::size_t i = 0; i < args.size(); ++i) {
        if (args[i] == "--config" && i + 1 < args.size()) {
            path = args[++i];
        } else if (args[i].rfind("--config=", 0) == 0) {
            path = args[i].substr(9);
        } else {
            rest.push_back(args[i]);
        }
    }
    if (path.empty() || rest.size() < 2) return rest;
    std::map<std::string, std::string> kv;
    try {
        kv = read_metadata(path);
    } catch (const std::exception& e) {
        throw ArgError(e.what());
    }
    std::vector<std::string> out{rest[0], rest[1]};
    for (auto& [k, v] : kv) out.push_back("--" + k + "=" + v);
    out.insert(out.end(), rest.begin() + 2, rest.end());
    return out;
}

int run_cli(std::vector<std::string> args);

int rerun(const std::string& manifest) {
    std::ifstream f(manifest);
    if (!f) throw ArgError("cannot read " + manifest);
    json m = json::parse(f);
    std::vector<std::string> args{"gfn", m.at("command").get<std::string>()};
    for (auto& [k, v] : m.at("config").items())
        if (!v.get<std::string>().empty()) args.push_back("--" + k + "=" + v.get<std::string>());
    return run_cli(args);
}

int run_cli(std::vector<std::string> raw) {
    CLI::App app{"Flow-network structure learning over DAGs"};
    app.require_subcommand(1);
    app.option_defaults()->always_capture_default()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);

    std::uint64_t seed = 0;
    std::string out_dir = ".";
    auto common = [&](CLI::App* c) {
        c->add_option("--seed", seed, "master seed; every random stream derives from it");
        c->add_option("--out-dir", out_dir, "output directory");
        c->add_option("--config", "key=value file merged under the flags");
    };

    GenOpts gen;
    auto* g = app.add_subcommand("gen-data", "sample a ground-truth graph and a dataset");
    common(g);
    g->add_option("--d", gen.d, "node count");
    g->add_option("--n", gen.n, "sample count");
    g->add_option("--er", gen.er, "expected edges per node")->check(CLI::NonNegativeNumber);
    g->add_option("--kind", gen.kind, "model family")->check(CLI::IsMember({"lingauss", "discrete"}));
    g->add_option("--arity", gen.arity, "categories per variable")->check(CLI::Range(2, 64));
    g->add_option("--noise", gen.noise, "noise variance")->check(CLI::PositiveNumber);

    TrainOpts tr;
    auto* t = app.add_subcommand("train", "train a forward policy");
    common(t);
    t->add_option("--env", tr.env, "dag, galton<rows>, markov, multipath, subtb or file:<path>");
    t->add_option("--loss", tr.loss, "training objective")
        ->check(CLI::IsMember({"tb", "modified-db", "sql", "reverse-kl"}));
    t->add_option("--policy", tr.policy, "policy family")->check(CLI::IsMember({"tabular", "mlp"}));
    t->add_option("--hidden", tr.hidden, "MLP width")->check(CLI::PositiveNumber);
    t->add_option("--steps", tr.cfg.steps, "optimizer steps");
    t->add_option("--batch", tr.cfg.batch, "trajectories or transitions per step");
    t->add_option("--lr", tr.cfg.lr, "policy learning rate");
    t->add_option("--lr-logz", tr.cfg.lr_logz, "log Z learning rate");
    t->add_option("--logz-warm-start", tr.cfg.logz_warm_start, "initialize log Z from the first batch");
    t->add_option("--eps-start", tr.cfg.eps_start, "initial exploration rate");
    t->add_option("--eps-min", tr.cfg.eps_min, "final exploration rate");
    t->add_option("--eps-decay-frac", tr.cfg.eps_decay_frac, "fraction of training over which epsilon decays");
    t->add_option("--temperature", tr.cfg.temperature, "behavior policy temperature");
    flag(t, "--on-policy", tr.cfg.on_policy, "sample from the policy itself");
    flag(t, "--huber", tr.huber, "Huber instead of squared loss");
    t->add_option("--huber-delta", tr.cfg.loss.delta, "Huber threshold");
    t->add_option("--target", tr.cfg.use_target, "use a frozen target copy for the next-state stop head");
    t->add_option("--target-period", tr.cfg.target_period, "target refresh period in steps");
    t->add_option("--buffer", tr.cfg.buffer_capacity, "replay capacity");
    t->add_option("--rollouts", tr.cfg.rollouts_per_step, "rollouts added to the buffer per step");
    t->add_option("--sql-rate", tr.cfg.sql_rate, "tabular SQL step size");
    t->add_option("--alpha", tr.cfg.alpha, "entropy temperature");
    t->add_option("--log-every", tr.cfg.log_every, "monitor period");
    flag(t, "--exact-eval", tr.exact_eval, "JSD against the exact posterior at every monitor step");
    t->add_option("--workers", tr.workers, "rollout workers; execution is sequential and deterministic");
    add_score_opts(t, tr.score);

    EvalOpts ev;
    auto* e = app.add_subcommand("evaluate", "metrics for a trained DAG policy");
    common(e);
    e->add_option("--checkpoint", ev.checkpoint, "checkpoint path without extension");
    e->add_option("--samples", ev.samples, "graphs sampled from the policy")->check(CLI::PositiveNumber);
    e->add_option("--beam", ev.beam, "beam width of the log-probability estimator")->check(CLI::NonNegativeNumber);
    e->add_option("--mc", ev.mc, "Monte Carlo orders of the estimator")->check(CLI::NonNegativeNumber);
    add_score_opts(e, ev.score);
    add_metric_opts(e, ev.metrics);

    BaselineOpts bl;
    auto* b = app.add_subcommand("baseline", "structure MCMC baseline");
    common(b);
    flag(b, "--mc3", bl.mc3, "run MC3 (the default)");
    b->add_option("--steps", bl.steps, "chain length");
    b->add_option("--thin", bl.thin, "thinning stride")->check(CLI::PositiveNumber);
    b->add_option("--burn", bl.burn, "burn-in fraction")->check(CLI::Range(0.0, 0.999));
    b->add_option("--reversals", bl.reversals, "propose edge reversals");
    add_score_opts(b, bl.score);
    add_metric_opts(b, bl.metrics);

    EnumOpts en;
    auto* n = app.add_subcommand("enumerate", "dump the exact posterior over every DAG");
    common(n);
    flag(n, "--policy-out", en.policy_out, "also write the exact forward policy as a checkpoint");
    add_score_opts(n, en.score);

    auto* rr = app.add_subcommand("rerun", "repeat a run from its manifest");
    std::string manifest;
    rr->add_option("manifest", manifest, "manifest.json of an earlier run")->required();

    std::vector<std::string> args;
    try {
        args = merge_config(raw);
    } catch (const ArgError& err) {
        std::cerr << "error: " << err.what() << "\n";
        return 2;
    }
    std::vector<const char*> argv;
    for (auto& a : args) argv.push_back(a.c_str());
    try {
        app.parse(int(argv.size()), argv.data());
    } catch (const CLI::ParseError& err) {
        return app.exit(err) == 0 ? 0 : 2;
    }

    try {
        if (rr->parsed()) return rerun(manifest);
        CLI::App* sub = app.get_subcommands().front();
        Run run;
        run.command = sub->get_name();
        run.config = effective_config(*sub);
        run.seed = seed;
        run.out = out_dir;
        fs::create_directories(run.out);
        json summary;
        if (g->parsed()) summary = cmd_gen_data(gen, run);
        else if (t->parsed()) summary = cmd_train(tr, run);
        else if (e->parsed()) summary = cmd_evaluate(ev, run);
        else if (b->parsed()) summary = cmd_baseline(bl, run);
        else summary = cmd_enumerate(en, run);
        run.finish(summary);
        std::cout << summary.dump() << "\n";
        return 0;
    } catch (const ArgError& err) {
        std::cerr << "error: " << err.what() << "\n";
        return 2;
    } catch (const CsvError& err) {
        std::cerr << "error: " << err.what() << "\n";
        return 2;
    } catch (const std::exception& err) {
        std::cerr << "error: " << err.what() << "\n";
        return 3;
    }
}

}  // namespace

int main(int argc, char** argv) { return run_cli(std::vector<std::string>(argv, argv + argc)); }

// Command-line front end: dataset generation, training, evaluation, bundle
// assembly, planning, benchmarks, sliding paths, and CSV grid/timing exports.

#include <CLI11.hpp>
#include <dexplan/bench.hpp>
#include <dexplan/sliding.hpp>

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace {

using namespace dexplan;

std::string default_hand_path() { return default_data_dir() + "/allegro_like.json"; }

/// Resolves --bundle into a full-hand distance field. "exact" is the
/// capsule-geometry oracle; "default" reads $DEXPLAN_BUNDLE_DIR and falls back
/// to the oracle when unset; anything else is a bundle directory.
std::unique_ptr<DistanceField> make_field(const std::string& bundle, const HandModel& hand) {
    if (bundle == "exact") return std::make_unique<ExactOracleField>(hand);
    std::string dir = bundle;
    if (bundle == "default") {
        const char* env = std::getenv("DEXPLAN_BUNDLE_DIR");
        if (!env || !*env) {
            std::cerr << "note: DEXPLAN_BUNDLE_DIR not set, using the exact oracle field\n";
            return std::make_unique<ExactOracleField>(hand);
        }
        dir = env;
    }
    ModelBundle b = ModelBundle::load(dir);
    if (b.hand.config_hash() != hand.config_hash())
        throw std::runtime_error("bundle was trained for a different hand than the scenario");
    return std::make_unique<CSpaceModel>(std::move(b));
}

/// CSV sink: --out file when given, stdout otherwise.
struct OutStream {
    std::ofstream file;
    std::ostream* os = &std::cout;

    explicit OutStream(const std::string& path) {
        if (path.empty()) return;
        file.open(path);
        if (!file) throw std::runtime_error("cannot open output file: " + path);
        os = &file;
    }
    std::ostream& get() { return *os; }
    bool to_file() const { return os != &std::cout; }
};

// ---------------------------------------------------------------------------
// gen-data

struct GenArgs {
    std::string kind, hand = default_hand_path(), out, csv;
    Eigen::Index n = 200000;
    std::uint64_t seed = 0;
    bool no_balance = false;
};

void cmd_gen_data(const GenArgs& a) {
    const HandModel hand = HandModel::load(a.hand);
    GenOptions o;
    o.n = a.n;
    o.seed = a.seed;
    o.balance = !a.no_balance;
    const auto t0 = std::chrono::steady_clock::now();
    const Dataset ds = a.kind == "self" ? generate_self_dataset(hand, o)
                                        : generate_object_dataset(hand, a.kind, o);
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    ds.save(a.out);
    if (!a.csv.empty()) {
        std::ofstream cs(a.csv);
        if (!cs) throw std::runtime_error("cannot open csv file: " + a.csv);
        ds.to_csv(cs);
    }
    std::cout << a.kind << " dataset: " << ds.size() << " samples, " << ds.in_dim() << " -> "
              << ds.out_dim() << ", bounds [" << ds.d_low.minCoeff() << ", "
              << ds.d_up.maxCoeff() << "] m, " << secs << " s -> " << a.out << "\n";
}

// ---------------------------------------------------------------------------
// train

struct TrainArgs {
    std::string data, out;
    std::vector<int> widths{64, 32};
    TrainConfig cfg;
    double holdout = 0.0;
};

void cmd_train(const TrainArgs& a) {
    const Dataset full = Dataset::load(a.data);
    Dataset train = full, test;
    if (a.holdout > 0) std::tie(train, test) = split_dataset(full, a.holdout, a.cfg.seed);

    Mlp net = Mlp::create(int(train.in_dim()), int(train.out_dim()), a.widths, a.cfg.seed);
    TrainCallback log;
    if (a.cfg.log_every > 0)
        log = [](int it, double l) { std::cerr << "iter " << it << "  loss " << l << "\n"; };
    const auto t0 = std::chrono::steady_clock::now();
    const double loss = train_on_dataset(net, train, a.cfg, log);
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    net.save(a.out);
    std::cout << "trained " << train.in_dim() << " -> " << train.out_dim() << " on "
              << train.size() << " samples, final loss " << loss << ", " << secs << " s -> "
              << a.out << "\n";
    if (a.holdout > 0) {
        const EvalMetrics m = evaluate_model(net, test);
        std::cout << "held-out (" << m.n << "): accuracy " << m.accuracy << ", fp " << m.fp_rate
                  << ", fn " << m.fn_rate << ", mae-in-band " << m.mae_band << " m\n";
    }
}

// ---------------------------------------------------------------------------
// eval

struct EvalArgs {
    std::string model, data, out;
    std::vector<double> margins{0.0, 0.003, 0.005};
    double band = 0.02;
};

void cmd_eval(const EvalArgs& a) {
    const Mlp net = Mlp::load(a.model);
    const Dataset ds = Dataset::load(a.data);
    OutStream os(a.out);
    os.get() << "margin,accuracy,fp_rate,fn_rate,mae,mae_band,n\n";
    for (double margin : a.margins) {
        const EvalMetrics m = evaluate_model(net, ds, a.band, margin);
        os.get() << margin << ',' << m.accuracy << ',' << m.fp_rate << ',' << m.fn_rate << ','
                 << m.mae << ',' << m.mae_band << ',' << m.n << "\n";
        if (os.to_file())
            std::cout << "margin " << margin << ": accuracy " << m.accuracy << ", fp "
                      << m.fp_rate << ", fn " << m.fn_rate << ", mae-in-band " << m.mae_band
                      << " m\n";
    }
}

// ---------------------------------------------------------------------------
// bundle

struct BundleArgs {
    std::string hand = default_hand_path(), self, palm, finger, thumb, out;
};

void cmd_bundle(const BundleArgs& a) {
    ModelBundle b;
    b.hand = HandModel::load(a.hand);
    b.self_net = Mlp::load(a.self);
    b.palm_net = Mlp::load(a.palm);
    b.finger_net = Mlp::load(a.finger);
    b.thumb_net = Mlp::load(a.thumb);
    b.validate();
    b.save(a.out);
    std::cout << "bundle written to " << a.out << "\n";
}

// ---------------------------------------------------------------------------
// plan / bench

struct RunArgs {
    std::string scenario, bundle = "default", out, out_dir, planner;
    std::optional<int> trials;
    std::optional<std::uint64_t> seed;
    int replan_cycles = 50;
};

ScenarioSpec load_spec(const RunArgs& a) {
    ScenarioSpec spec = ScenarioSpec::load(a.scenario);
    if (!a.planner.empty()) spec.planners = {a.planner};
    if (a.trials) spec.trials = *a.trials;
    if (a.seed) spec.seed = *a.seed;
    return spec;
}

void cmd_plan(const RunArgs& a) {
    const ScenarioSpec spec = load_spec(a);
    const auto field = make_field(a.bundle, spec.hand);
    const BenchReport rep = run_benchmark(spec, *field);
    for (const auto& pb : rep.planners)
        for (const auto& tr : pb.trials)
            std::cout << pb.planner << " trial " << tr.trial << ": " << to_string(tr.status)
                      << ", " << tr.ms << " ms, length " << tr.length << ", " << tr.nodes
                      << " nodes, " << tr.iterations << " iterations\n";
    std::cout << rep.table();
    if (!a.out.empty()) {
        OutStream os(a.out);
        rep.write_trials_csv(os.get());
    }
}

void cmd_bench(const RunArgs& a) {
    const ScenarioSpec spec = load_spec(a);
    const auto field = make_field(a.bundle, spec.hand);
    const BenchReport rep = run_benchmark(spec, *field, &std::cerr);
    std::cout << rep.table();

    namespace fs = std::filesystem;
    if (!a.out_dir.empty()) {
        fs::create_directories(a.out_dir);
        const auto base = fs::path(a.out_dir) / spec.name;
        std::ofstream t(base.string() + "_trials.csv"), s(base.string() + "_summary.csv");
        rep.write_trials_csv(t);
        rep.write_summary_csv(s);
    }
    if (spec.obstacles.dynamic()) {
        const ReplanBench rb = run_replan_benchmark(spec, *field, a.replan_cycles);
        std::cout << "replan over " << a.replan_cycles << " cycles: median " << rb.median_ms()
                  << " ms, max " << rb.max_ms() << " ms, path found in " << rb.found() << "\n";
        if (!a.out_dir.empty()) {
            std::ofstream r((fs::path(a.out_dir) / (spec.name + "_replan.csv")));
            rb.write_csv(r);
        }
    }
}

// ---------------------------------------------------------------------------
// slide

struct SlideArgs {
    RunArgs run;
    SlidingConfig cfg;
};

void cmd_slide(const SlideArgs& a) {
    const ScenarioSpec spec = load_spec(a.run);
    const auto field = make_field(a.run.bundle, spec.hand);
    SlidingConfig cfg = a.cfg;
    const SlidingPlan sp = run_sliding(spec, *field, cfg);
    if (sp.plan.status != PlanStatus::kPathFound)
        throw std::runtime_error(std::string("no contact path: planner reported ") +
                                 to_string(sp.plan.status));

    // residuals against the capsule-geometry oracle, independent of the field
    const ExactOracleField oracle(spec.hand);
    const MaskedField masked = spec.masked(oracle);
    const PointSet X = spec.obstacles.at(0);

    OutStream os(a.run.out);
    os.get() << "waypoint,residual_model,residual_oracle,converged\n";
    double worst_model = 0, worst_oracle = 0;
    for (std::size_t i = 0; i < sp.boundary_path.size(); ++i) {
        const double oracle_res = std::abs(masked.query(sp.boundary_path[i], X, false).d);
        os.get() << i << ',' << sp.residuals[i] << ',' << oracle_res << ','
                 << int(sp.converged[i]) << "\n";
        if (i > 0 && i + 1 < sp.boundary_path.size()) {
            worst_model = std::max(worst_model, sp.residuals[i]);
            worst_oracle = std::max(worst_oracle, oracle_res);
        }
    }
    if (os.to_file())
        std::cout << sp.boundary_path.size() << " waypoints, interior max residual "
                  << worst_model << " m (model) / " << worst_oracle << " m (oracle), "
                  << sp.non_converged << " not converged\n";
}

// ---------------------------------------------------------------------------
// isolines / streamlines / timing

void cmd_isolines(const RunArgs& a, int resolution) {
    const ScenarioSpec spec = load_spec(a);
    const auto pred = make_field(a.bundle, spec.hand);
    const ExactOracleField ref(spec.hand);
    OutStream os(a.out);
    emit_isolines(os.get(), spec, *pred, ref, resolution);
}

void cmd_streamlines(const RunArgs& a, int resolution) {
    const ScenarioSpec spec = load_spec(a);
    const auto field = make_field(a.bundle, spec.hand);
    OutStream os(a.out);
    emit_streamlines(os.get(), spec, *field, resolution);
}

void cmd_timing(const RunArgs& a, const std::vector<Eigen::Index>& sizes) {
    const ScenarioSpec spec = load_spec(a);
    const auto learned = make_field(a.bundle, spec.hand);
    const ExactOracleField oracle(spec.hand);
    const auto rows = timing_comparison(*learned, oracle, spec.hand.lower_limits(),
                                        spec.hand.upper_limits(), spec.obstacles.at(0), sizes,
                                        a.seed.value_or(spec.seed));
    OutStream os(a.out);
    write_timing_csv(os.get(), rows);
    if (os.to_file())
        for (const auto& r : rows)
            std::cout << "batch " << r.batch << ": model " << r.learned_ms << " ms, oracle "
                      << r.oracle_ms << " ms\n";
}

// ---------------------------------------------------------------------------
// weight-grid: sweep the asymmetric-loss weights on small nets

struct GridArgs {
    std::string data, out;
    std::vector<double> w2{2, 4, 6, 8}, w3{2, 4, 6, 8};
    std::vector<int> widths{64, 32};
    int iters = 4000;
    double holdout = 0.1;
    std::uint64_t seed = 0;
};

void cmd_weight_grid(const GridArgs& a) {
    const Dataset full = Dataset::load(a.data);
    const auto [train, test] = split_dataset(full, a.holdout, a.seed);
    OutStream os(a.out);
    os.get() << "w2,w3,accuracy,fp_rate,fn_rate,mae_band\n";
    for (double w2 : a.w2)
        for (double w3 : a.w3) {
            TrainConfig cfg;
            cfg.iters = a.iters;
            cfg.w2 = w2;
            cfg.w3 = w3;
            cfg.seed = a.seed;
            cfg.log_every = 0;
            Mlp net = Mlp::create(int(train.in_dim()), int(train.out_dim()), a.widths, a.seed);
            train_on_dataset(net, train, cfg);
            const EvalMetrics m = evaluate_model(net, test);
            os.get() << w2 << ',' << w3 << ',' << m.accuracy << ',' << m.fp_rate << ','
                     << m.fn_rate << ',' << m.mae_band << "\n";
            std::cerr << "w2=" << w2 << " w3=" << w3 << ": accuracy " << m.accuracy << "\n";
        }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"dexplan: learned distance fields and planners for a multi-fingered hand"};
    app.require_subcommand(1);

    const char* kinds[] = {"self", "palm", "index", "middle", "ring", "thumb"};

    GenArgs gen;
    auto* g = app.add_subcommand("gen-data", "Sample a labeled distance dataset from the hand");
    g->add_option("--kind", gen.kind, "self (joint pairs) or a hand part vs. obstacle point")
        ->required()
        ->check(CLI::IsMember(std::vector<std::string>(std::begin(kinds), std::end(kinds))));
    g->add_option("--n", gen.n, "samples after balancing")->capture_default_str();
    g->add_option("--seed", gen.seed, "sampling seed")->capture_default_str();
    g->add_option("--hand", gen.hand, "hand model json")->capture_default_str();
    g->add_option("--out", gen.out, "output .dxds file")->required();
    g->add_option("--csv", gen.csv, "also export rows as csv");
    g->add_flag("--no-balance", gen.no_balance, "skip 50/50 free-colliding balancing");

    TrainArgs tr;
    auto* t = app.add_subcommand("train", "Fit a distance regressor to a dataset");
    t->add_option("--data", tr.data, "training .dxds file")->required();
    t->add_option("--out", tr.out, "output .dxnn file")->required();
    t->add_option("--widths", tr.widths, "hidden layer widths")
        ->delimiter(',')
        ->capture_default_str();
    t->add_option("--iters", tr.cfg.iters, "adam iterations")->capture_default_str();
    t->add_option("--batch", tr.cfg.batch, "minibatch size")->capture_default_str();
    t->add_option("--lr", tr.cfg.lr, "learning rate")->capture_default_str();
    t->add_option("--w1", tr.cfg.w1, "weight: confidently correct")->capture_default_str();
    t->add_option("--w2", tr.cfg.w2, "weight: missed collision")->capture_default_str();
    t->add_option("--w3", tr.cfg.w3, "weight: spurious collision")->capture_default_str();
    t->add_option("--seed", tr.cfg.seed, "init/shuffle seed")->capture_default_str();
    t->add_option("--log-every", tr.cfg.log_every, "loss print period, 0 silences")
        ->capture_default_str();
    t->add_option("--holdout", tr.holdout, "fraction held out for a post-train report")
        ->capture_default_str();

    EvalArgs ev;
    auto* e = app.add_subcommand("eval", "Score a trained regressor on a dataset");
    e->add_option("--model", ev.model, "trained .dxnn file")->required();
    e->add_option("--data", ev.data, "evaluation .dxds file")->required();
    e->add_option("--margins", ev.margins, "safety margins in meters")
        ->delimiter(',')
        ->capture_default_str();
    e->add_option("--band", ev.band, "half-width of the near-boundary band")
        ->capture_default_str();
    e->add_option("--out", ev.out, "metrics csv (stdout when omitted)");

    BundleArgs bu;
    auto* b = app.add_subcommand("bundle", "Assemble trained nets into a model bundle");
    b->add_option("--hand", bu.hand, "hand model json")->capture_default_str();
    b->add_option("--self", bu.self, "self-distance net")->required();
    b->add_option("--palm", bu.palm, "palm-obstacle net")->required();
    b->add_option("--finger", bu.finger, "shared finger-obstacle net")->required();
    b->add_option("--thumb", bu.thumb, "thumb-obstacle net")->required();
    b->add_option("--out", bu.out, "bundle directory")->required();

    auto add_run_opts = [](CLI::App* sub, RunArgs& r, bool planner_opt) {
        sub->add_option("--scenario,--spec", r.scenario, "scenario name or json path")
            ->required();
        sub->add_option("--bundle", r.bundle,
                        "bundle dir, 'exact' for the geometry oracle, or 'default' "
                        "($DEXPLAN_BUNDLE_DIR, oracle fallback)")
            ->capture_default_str();
        sub->add_option("--trials", r.trials, "override the scenario trial count");
        sub->add_option("--seed", r.seed, "override the scenario seed");
        if (planner_opt)
            sub->add_option("--planner", r.planner, "run only this planner")
                ->check(CLI::IsMember(planner_names()));
    };

    RunArgs plan;
    auto* p = app.add_subcommand("plan", "Plan a scenario and report per-trial results");
    add_run_opts(p, plan, true);
    p->add_option("--out", plan.out, "per-trial csv");

    RunArgs bench;
    auto* bn = app.add_subcommand("bench", "Benchmark every planner a scenario lists");
    add_run_opts(bn, bench, false);
    bn->add_option("--out-dir", bench.out_dir, "directory for trials/summary/replan csv");
    bn->add_option("--replan-cycles", bench.replan_cycles,
                   "cycles for the moving-obstacle replan benchmark")
        ->capture_default_str();

    SlideArgs slide;
    auto* sl = app.add_subcommand("slide", "Plan a path and pull it onto the contact surface");
    add_run_opts(sl, slide.run, false);
    sl->add_option("--out", slide.run.out, "waypoint residual csv (stdout when omitted)");
    sl->add_option("--planner", slide.cfg.planner, "underlying avoidance planner")
        ->check(CLI::IsMember(planner_names()))
        ->capture_default_str();
    sl->add_option("--spacing", slide.cfg.spacing, "waypoint spacing, radians")
        ->capture_default_str();
    sl->add_option("--contact-tol", slide.cfg.contact_tol, "accepted |distance| on the surface")
        ->capture_default_str();
    sl->add_option("--max-iters", slide.cfg.max_iters, "projection steps per waypoint")
        ->capture_default_str();

    RunArgs iso;
    int iso_res = 81;
    auto* is = app.add_subcommand("isolines",
                                  "Model vs. oracle distance over a 2-joint scenario grid");
    add_run_opts(is, iso, false);
    is->add_option("--resolution", iso_res, "grid points per joint")->capture_default_str();
    is->add_option("--out", iso.out, "grid csv (stdout when omitted)");

    RunArgs str;
    int str_res = 41;
    auto* st = app.add_subcommand("streamlines",
                                  "Modulated velocity field over a 2-joint scenario grid");
    add_run_opts(st, str, false);
    st->add_option("--resolution", str_res, "grid points per joint")->capture_default_str();
    st->add_option("--out", str.out, "grid csv (stdout when omitted)");

    RunArgs tim;
    std::vector<Eigen::Index> tim_sizes{1000, 10000, 100000};
    auto* ti = app.add_subcommand("timing", "Batched query wall time, model vs. oracle");
    add_run_opts(ti, tim, false);
    ti->add_option("--sizes", tim_sizes, "batch sizes")->delimiter(',')->capture_default_str();
    ti->add_option("--out", tim.out, "timing csv (stdout when omitted)");

    GridArgs grid;
    auto* w = app.add_subcommand("weight-grid",
                                 "Sweep the asymmetric-loss weights on held-out accuracy");
    w->add_option("--data", grid.data, "training .dxds file")->required();
    w->add_option("--w2", grid.w2, "missed-collision weights")
        ->delimiter(',')
        ->capture_default_str();
    w->add_option("--w3", grid.w3, "spurious-collision weights")
        ->delimiter(',')
        ->capture_default_str();
    w->add_option("--widths", grid.widths, "hidden layer widths")
        ->delimiter(',')
        ->capture_default_str();
    w->add_option("--iters", grid.iters, "adam iterations per cell")->capture_default_str();
    w->add_option("--holdout", grid.holdout, "held-out fraction")->capture_default_str();
    w->add_option("--seed", grid.seed, "split/init seed")->capture_default_str();
    w->add_option("--out", grid.out, "grid csv (stdout when omitted)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& err) {
        return app.exit(err) ? 2 : 0;
    }

    try {
        if (*g) cmd_gen_data(gen);
        if (*t) cmd_train(tr);
        if (*e) cmd_eval(ev);
        if (*b) cmd_bundle(bu);
        if (*p) cmd_plan(plan);
        if (*bn) cmd_bench(bench);
        if (*sl) cmd_slide(slide);
        if (*is) cmd_isolines(iso, iso_res);
        if (*st) cmd_streamlines(str, str_res);
        if (*ti) cmd_timing(tim, tim_sizes);
        if (*w) cmd_weight_grid(grid);
    } catch (const std::exception& err) {
        std::cerr << "error: " << err.what() << "\n";
        return 1;
    }
    return 0;
}

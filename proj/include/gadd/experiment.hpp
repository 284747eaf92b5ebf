#pragma once

#include <chrono>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <memory>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "gadd/config.hpp"
#include "gadd/evaluation.hpp"
#include "gadd/pipeline.hpp"
#include "gadd/score_oracle.hpp"
#include "gadd/targets.hpp"

namespace gadd {

// ---------------------------------------------------------------------------
// Experiment records and CSV output.
// Schema (ordered): method,seed,nfe,tv,hellinger,wallclock_ns.
// Absent optional metrics serialize as empty strings.
// ---------------------------------------------------------------------------

struct ExperimentRecord {
    std::string method;
    std::uint64_t seed = 0;
    long nfe = 0;
    std::optional<double> tv;
    std::optional<double> hellinger;
    long long wallclock_ns = 0;
};

inline std::string format_csv(std::span<const ExperimentRecord> records) {
    std::string out = "method,seed,nfe,tv,hellinger,wallclock_ns\n";
    char buf[64];
    auto append_double = [&](const std::optional<double>& v) {
        if (v) {
            std::snprintf(buf, sizeof(buf), "%.17g", *v);
            out += buf;
        }
    };
    for (const ExperimentRecord& r : records) {
        out += r.method;
        out += ',';
        out += std::to_string(r.seed);
        out += ',';
        out += std::to_string(r.nfe);
        out += ',';
        append_double(r.tv);
        out += ',';
        append_double(r.hellinger);
        out += ',';
        out += std::to_string(r.wallclock_ns);
        out += '\n';
    }
    return out;
}

inline void write_csv_file(const std::string& path, std::span<const ExperimentRecord> records) {
    std::ofstream os(path);
    if (!os) throw IoError("cannot open for writing: " + path);
    os << format_csv(records);
}

// ---------------------------------------------------------------------------
// Static SVG chart: tv (log scale) against NFE, one polyline per method.
// Convenience output only; nothing downstream depends on it.
// ---------------------------------------------------------------------------

inline void write_tv_chart_svg(const std::string& path, std::span<const TvCurve> curves) {
    static const char* kColors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e"};
    const double width = 640, height = 480, margin = 60;

    double nfe_lo = 1e300, nfe_hi = -1e300, tv_lo = 1e300, tv_hi = -1e300;
    for (const TvCurve& c : curves)
        for (const TvPoint& p : c.points) {
            nfe_lo = std::min(nfe_lo, static_cast<double>(p.nfe));
            nfe_hi = std::max(nfe_hi, static_cast<double>(p.nfe));
            const double tv = std::max(p.tv, 1e-16);
            tv_lo = std::min(tv_lo, tv);
            tv_hi = std::max(tv_hi, tv);
        }
    if (nfe_hi <= nfe_lo) nfe_hi = nfe_lo + 1;
    if (tv_hi <= tv_lo) tv_hi = tv_lo * 10;

    auto px = [&](double nfe) {
        return margin + (nfe - nfe_lo) / (nfe_hi - nfe_lo) * (width - 2 * margin);
    };
    auto py = [&](double tv) {
        const double l = std::log10(std::max(tv, 1e-16));
        const double lo = std::log10(tv_lo), hi = std::log10(tv_hi);
        return height - margin - (l - lo) / (hi - lo) * (height - 2 * margin);
    };

    std::ofstream os(path);
    if (!os) throw IoError("cannot open for writing: " + path);
    os << "<svg xmlns='http://www.w3.org/2000/svg' width='" << width << "' height='" << height
       << "'>\n<rect width='100%' height='100%' fill='white'/>\n";
    os << "<rect x='" << margin << "' y='" << margin << "' width='" << width - 2 * margin
       << "' height='" << height - 2 * margin << "' fill='none' stroke='black'/>\n";
    os << "<text x='" << width / 2 << "' y='" << height - 15
       << "' text-anchor='middle' font-size='14'>NFE</text>\n";
    os << "<text x='18' y='" << height / 2 << "' text-anchor='middle' font-size='14' "
       << "transform='rotate(-90 18 " << height / 2 << ")'>TV (log scale)</text>\n";
    int color = 0;
    for (const TvCurve& c : curves) {
        os << "<polyline fill='none' stroke='" << kColors[color % 5] << "' stroke-width='2' points='";
        for (const TvPoint& p : c.points) os << px(static_cast<double>(p.nfe)) << ',' << py(p.tv) << ' ';
        os << "'/>\n";
        os << "<text x='" << width - margin + 4 << "' y='" << margin + 18 * (color + 1)
           << "' font-size='12' fill='" << kColors[color % 5] << "'>" << c.method << "</text>\n";
        ++color;
    }
    os << "</svg>\n";
}

// ---------------------------------------------------------------------------
// Experiment setup: everything the CLI reads from a config file.
// ---------------------------------------------------------------------------

struct ExperimentSetup {
    TargetSpec target;
    std::uint64_t target_seed = 1;

    double T = 6.0;
    double delta = 0.05;
    std::optional<double> kappa;
    std::optional<long> outer_steps;

    std::uint64_t seed = 1;
    long chains = 10000;
    std::string mode = "auto";  // auto | pushforward | monte-carlo
    OverflowPolicy overflow = OverflowPolicy::Strict;
    std::optional<ClampMask> clamp;

    CorrectorKind corrector = CorrectorKind::None;
    GibbsCorrectorConfig gibbs;
    CtmcCorrectorConfig ctmc;

    bool perturb_scores = false;
    double score_m = 1e9;
    double score_sigma = 0.0;
    std::uint64_t score_seed = 0;

    std::vector<long> nfe_list;
    double contraction_t = 0.0;  // 0 means "use delta"
    int decay_steps = 200;

    std::string csv_path;
    std::string chart_path;
};

namespace detail {

inline ClampMask parse_clamp(const std::string& text) {
    ClampMask mask;
    std::istringstream is(text);
    std::string item;
    while (std::getline(is, item, ',')) {
        const std::size_t colon = item.find(':');
        if (colon == std::string::npos)
            throw InvalidConfig("clamp entries must look like position:value, got: " + item);
        mask.positions.push_back(std::stoi(item.substr(0, colon)));
        mask.values.push_back(static_cast<Token>(std::stoi(item.substr(colon + 1))));
    }
    return mask;
}

}  // namespace detail

inline ExperimentSetup load_setup(const ConfigFile& cfg) {
    ExperimentSetup s;

    const std::string kind = cfg.get("target", "kind");
    if (kind == "uniform-band")
        s.target.kind = TargetKind::UniformBand;
    else if (kind == "ar")
        s.target.kind = TargetKind::Ar;
    else if (kind == "mixture")
        s.target.kind = TargetKind::MixtureOfSingletons;
    else if (kind == "file")
        s.target.kind = TargetKind::File;
    else
        throw InvalidConfig("target.kind must be uniform-band|ar|mixture|file, got: " + kind);
    s.target.space = StateSpaceSpec(static_cast<int>(cfg.get_long("target", "d")),
                                    static_cast<int>(cfg.get_long("target", "S")));
    s.target.band_lo = cfg.get_double_or("target", "l", 0.5);
    s.target.band_hi = cfg.get_double_or("target", "u", 2.0);
    s.target.ar_order = static_cast<int>(cfg.get_long_or("target", "h", 2));
    s.target.support = static_cast<int>(cfg.get_long_or("target", "support", 0));
    s.target.path = cfg.get_or("target", "path", "");
    s.target_seed = static_cast<std::uint64_t>(cfg.get_long_or("target", "seed", 1));

    if (cfg.has("grid", "accuracy")) {
        const GridDefaults g =
            grid_defaults_for_accuracy(s.target.space, cfg.get_double("grid", "accuracy"));
        s.T = cfg.get_double_or("grid", "T", g.T);
        s.delta = cfg.get_double_or("grid", "delta", g.delta);
    } else {
        s.T = cfg.get_double("grid", "T");
        s.delta = cfg.get_double("grid", "delta");
    }
    if (cfg.has("grid", "kappa")) s.kappa = cfg.get_double("grid", "kappa");
    if (cfg.has("grid", "steps")) s.outer_steps = cfg.get_long("grid", "steps");
    if (!s.kappa && !s.outer_steps)
        throw InvalidConfig("grid: one of kappa or steps is required");

    s.seed = static_cast<std::uint64_t>(cfg.get_long_or("sampler", "seed", 1));
    s.chains = cfg.get_long_or("sampler", "chains", 10000);
    s.mode = cfg.get_or("sampler", "mode", "auto");
    if (s.mode != "auto" && s.mode != "pushforward" && s.mode != "monte-carlo")
        throw InvalidConfig("sampler.mode must be auto|pushforward|monte-carlo");
    const std::string overflow = cfg.get_or("sampler", "overflow", "strict");
    if (overflow == "strict")
        s.overflow = OverflowPolicy::Strict;
    else if (overflow == "clamp")
        s.overflow = OverflowPolicy::Clamp;
    else
        throw InvalidConfig("sampler.overflow must be strict|clamp");
    if (cfg.has("sampler", "clamp")) s.clamp = detail::parse_clamp(cfg.get("sampler", "clamp"));

    const std::string score = cfg.get_or("sampler", "score", "exact");
    if (score == "perturbed") {
        s.perturb_scores = true;
        s.score_m = cfg.get_double_or("sampler", "score_m", 1e9);
        s.score_sigma = cfg.get_double_or("sampler", "score_sigma", 0.1);
        s.score_seed = static_cast<std::uint64_t>(cfg.get_long_or("sampler", "score_seed", 0));
    } else if (score != "exact") {
        throw InvalidConfig("sampler.score must be exact|perturbed");
    }

    const std::string corrector = cfg.get_or("corrector", "kind", "none");
    if (corrector == "none")
        s.corrector = CorrectorKind::None;
    else if (corrector == "gibbs")
        s.corrector = CorrectorKind::Gibbs;
    else if (corrector == "ctmc")
        s.corrector = CorrectorKind::Ctmc;
    else
        throw InvalidConfig("corrector.kind must be none|gibbs|ctmc");

    if (cfg.has("corrector", "L")) {
        s.gibbs.L.clear();
        for (long v : cfg.get_list<long>("corrector", "L")) s.gibbs.L.push_back(static_cast<int>(v));
    }
    const std::string scan = cfg.get_or("corrector", "scan", "random");
    if (scan == "random")
        s.gibbs.scan = ScanKind::Random;
    else if (scan == "systematic")
        s.gibbs.scan = ScanKind::Systematic;
    else
        throw InvalidConfig("corrector.scan must be random|systematic");
    const std::string estimator = cfg.get_or("corrector", "estimator", "inverse-sum");
    if (estimator == "inverse-sum")
        s.gibbs.estimator = EstimatorVariant::InverseSum;
    else if (estimator == "anchor-ratio")
        s.gibbs.estimator = EstimatorVariant::AnchorRatio;
    else if (estimator == "averaged-ratio")
        s.gibbs.estimator = EstimatorVariant::AveragedRatio;
    else if (estimator == "sum-normalized")
        s.gibbs.estimator = EstimatorVariant::SumNormalized;
    else
        throw InvalidConfig("corrector.estimator: unknown variant " + estimator);
    const std::string policy = cfg.get_or("corrector", "policy", "stale");
    if (policy == "stale")
        s.gibbs.policy = ScorePolicy::Stale;
    else if (policy == "fresh")
        s.gibbs.policy = ScorePolicy::Fresh;
    else
        throw InvalidConfig("corrector.policy must be stale|fresh");
    if (cfg.has("corrector", "threshold")) {
        const double tau = cfg.get_double("corrector", "threshold");
        if (tau < 0.0 || tau > 1.0) throw InvalidConfig("corrector.threshold must be in [0,1]");
        s.gibbs.threshold = tau;
    }
    s.gibbs.strict_nfe = cfg.get_bool_or("corrector", "strict_nfe", false);
    if (cfg.has("corrector", "weights"))
        s.gibbs.weights = cfg.get_list<double>("corrector", "weights");
    if (cfg.has("corrector", "anchor"))
        s.gibbs.anchor = static_cast<int>(cfg.get_long("corrector", "anchor"));
    s.ctmc.eta = cfg.get_double_or("corrector", "eta", 0.05);
    s.ctmc.steps = static_cast<int>(cfg.get_long_or("corrector", "steps", 1));
    s.ctmc.eta_relative = cfg.get_bool_or("corrector", "eta_relative", false);

    if (cfg.has("eval", "nfe")) s.nfe_list = cfg.get_list<long>("eval", "nfe");
    s.contraction_t = cfg.get_double_or("eval", "t", 0.0);
    s.decay_steps = static_cast<int>(cfg.get_long_or("eval", "decay_steps", 200));

    s.csv_path = cfg.get_or("output", "csv", "");
    s.chart_path = cfg.get_or("output", "chart", "");
    return s;
}

// ---------------------------------------------------------------------------
// Shared experiment context: target law, reference oracle, sampler oracle.
// ---------------------------------------------------------------------------

struct ExperimentContext {
    Pmf target_pmf;
    std::shared_ptr<ExactScoreOracle> exact;
    std::shared_ptr<const ScoreOracle> sampler_oracle;
};

inline ExperimentContext build_context(const ExperimentSetup& setup) {
    Rng rng(setup.target_seed);
    Pmf target = build_target(setup.target, rng);
    auto exact = std::make_shared<ExactScoreOracle>(target);
    std::shared_ptr<const ScoreOracle> sampler_oracle = exact;
    if (setup.perturb_scores)
        sampler_oracle = std::make_shared<PerturbedScoreOracle>(exact, setup.score_m,
                                                                setup.score_sigma, setup.score_seed);
    return {std::move(target), std::move(exact), std::move(sampler_oracle)};
}

inline SamplerConfig make_sampler_config(const ExperimentSetup& setup, const TimeGrid& grid) {
    SamplerConfig cfg;
    cfg.space = setup.target.space;
    cfg.grid = grid;
    cfg.corrector = setup.corrector;
    cfg.gibbs = setup.gibbs;
    cfg.ctmc = setup.ctmc;
    cfg.clamp = setup.clamp;
    cfg.overflow = setup.overflow;
    cfg.seed = setup.seed;
    return cfg;
}

inline TimeGrid resolve_grid(const ExperimentSetup& setup) {
    if (setup.outer_steps)
        return build_time_grid(setup.T, setup.delta,
                               kappa_for_steps(setup.T, setup.delta,
                                               static_cast<int>(*setup.outer_steps)));
    return build_time_grid(setup.T, setup.delta, *setup.kappa);
}

inline bool pushforward_supported(const SamplerConfig& cfg) {
    return cfg.space.enumerable() &&
           !(cfg.corrector == CorrectorKind::Gibbs && cfg.gibbs.policy == ScorePolicy::Stale);
}

namespace detail {

inline long long elapsed_ns(std::chrono::steady_clock::time_point start) {
    return std::chrono::duration_cast<std::chrono::nanoseconds>(
               std::chrono::steady_clock::now() - start)
        .count();
}

}  // namespace detail

// ---------------------------------------------------------------------------
// `run`: execute the configured sampler once, one record per NFE checkpoint
// (exact pushforward) or one terminal record (Monte Carlo).
// ---------------------------------------------------------------------------

inline std::vector<ExperimentRecord> cmd_run(const ExperimentSetup& setup,
                                             const std::string& method_label = "") {
    const ExperimentContext ctx = build_context(setup);
    const TimeGrid grid = resolve_grid(setup);
    const SamplerConfig cfg = make_sampler_config(setup, grid);
    cfg.validate();

    std::string method = method_label;
    if (method.empty())
        method = (cfg.corrector == CorrectorKind::None)  ? "euler"
                 : (cfg.corrector == CorrectorKind::Gibbs) ? "gadd"
                                                           : "ctmc";

    const bool exact_mode =
        setup.mode == "pushforward" || (setup.mode == "auto" && pushforward_supported(cfg));
    const auto start = std::chrono::steady_clock::now();
    std::vector<ExperimentRecord> records;

    if (exact_mode) {
        const auto laws = run_pushforward(cfg, *ctx.sampler_oracle);
        for (const PushforwardRecord& rec : laws) {
            const Pmf& reference = ctx.exact->marginal(rec.t);
            ExperimentRecord row;
            row.method = method;
            row.seed = setup.seed;
            row.nfe = rec.nfe;
            row.tv = tv_distance(rec.law, reference);
            row.hellinger = hellinger(token_marginal(rec.law), token_marginal(reference));
            row.wallclock_ns = detail::elapsed_ns(start);
            records.push_back(std::move(row));
        }
    } else {
        const MonteCarloResult mc = run_monte_carlo(cfg, *ctx.sampler_oracle, setup.chains);
        ExperimentRecord row;
        row.method = method;
        row.seed = setup.seed;
        row.nfe = mc.per_chain.total();
        if (mc.empirical) {
            const Pmf& reference = ctx.exact->marginal(setup.delta);
            row.tv = tv_distance(*mc.empirical, reference);
            row.hellinger = hellinger_histogram(mc.samples, reference);
        }
        row.wallclock_ns = detail::elapsed_ns(start);
        records.push_back(std::move(row));
    }
    return records;
}

// ---------------------------------------------------------------------------
// `sweep-nfe`: matched-budget comparison. Euler spends the entire budget on
// predictor steps; a configured corrector splits the budget between predictor
// steps and corrector charges exactly as the ledger would.
// ---------------------------------------------------------------------------

struct SweepResult {
    std::vector<ExperimentRecord> records;
    std::vector<TvCurve> curves;
};

namespace detail {

/// Outer steps implied by an NFE budget under the configured corrector.
inline int outer_steps_for_budget(const SamplerConfig& cfg, long budget) {
    if (budget < 1) throw InvalidConfig("sweep-nfe: budget must be >= 1");
    switch (cfg.corrector) {
        case CorrectorKind::None:
            return static_cast<int>(budget);
        case CorrectorKind::Gibbs: {
            if (cfg.gibbs.L.size() != 1)
                throw InvalidConfig("sweep-nfe: Gibbs sweeps need a constant L schedule");
            const int L = cfg.gibbs.L[0];
            if (L < 1) throw InvalidConfig("sweep-nfe: Gibbs sweeps need L >= 1");
            const long per_outer =
                (cfg.gibbs.policy == ScorePolicy::Stale)
                    ? 2
                    : 1 + static_cast<long>(L) * cfg.gibbs.fresh_charge(cfg.space.S);
            if (budget % per_outer != 0)
                throw InvalidConfig("sweep-nfe: budget " + std::to_string(budget) +
                                    " is not divisible by the per-outer-step cost " +
                                    std::to_string(per_outer));
            return static_cast<int>(budget / per_outer);
        }
        case CorrectorKind::Ctmc: {
            const long per_outer = 1 + cfg.ctmc.steps;
            if (budget % per_outer != 0)
                throw InvalidConfig("sweep-nfe: budget " + std::to_string(budget) +
                                    " is not divisible by the per-outer-step cost " +
                                    std::to_string(per_outer));
            return static_cast<int>(budget / per_outer);
        }
    }
    throw InvalidConfig("sweep-nfe: unknown corrector");
}

inline ExperimentRecord measure_terminal(const ExperimentSetup& setup,
                                         const ExperimentContext& ctx, const SamplerConfig& cfg,
                                         const std::string& method) {
    const Pmf& reference = ctx.exact->marginal(setup.delta);
    const auto start = std::chrono::steady_clock::now();
    ExperimentRecord row;
    row.method = method;
    row.seed = setup.seed;
    const bool exact_mode =
        setup.mode == "pushforward" || (setup.mode == "auto" && pushforward_supported(cfg));
    if (exact_mode) {
        const auto laws = run_pushforward(cfg, *ctx.sampler_oracle);
        row.nfe = laws.back().nfe;
        row.tv = tv_distance(laws.back().law, reference);
        row.hellinger = hellinger(token_marginal(laws.back().law), token_marginal(reference));
    } else {
        const MonteCarloResult mc = run_monte_carlo(cfg, *ctx.sampler_oracle, setup.chains);
        row.nfe = mc.per_chain.total();
        if (mc.empirical) {
            row.tv = tv_distance(*mc.empirical, reference);
            row.hellinger = hellinger_histogram(mc.samples, reference);
        }
    }
    row.wallclock_ns = elapsed_ns(start);
    return row;
}

}  // namespace detail

inline SweepResult cmd_sweep_nfe(const ExperimentSetup& setup, std::span<const long> budgets) {
    if (budgets.empty()) throw InvalidConfig("sweep-nfe: no NFE budgets given");
    const ExperimentContext ctx = build_context(setup);

    std::vector<std::pair<std::string, CorrectorKind>> methods;
    methods.emplace_back("euler", CorrectorKind::None);
    if (setup.corrector == CorrectorKind::Gibbs) methods.emplace_back("gadd", CorrectorKind::Gibbs);
    if (setup.corrector == CorrectorKind::Ctmc) methods.emplace_back("ctmc", CorrectorKind::Ctmc);

    SweepResult result;
    for (const auto& [name, kind] : methods) {
        TvCurve curve;
        curve.method = name;
        curve.seed = setup.seed;
        for (long budget : budgets) {
            SamplerConfig cfg = make_sampler_config(setup, TimeGrid{});
            cfg.corrector = kind;
            const int outer = detail::outer_steps_for_budget(cfg, budget);
            cfg.grid = build_time_grid(setup.T, setup.delta,
                                       kappa_for_steps(setup.T, setup.delta, outer));
            ExperimentRecord row = detail::measure_terminal(setup, ctx, cfg, name);
            if (row.nfe != budget)
                throw InvalidConfig("sweep-nfe: realized NFE " + std::to_string(row.nfe) +
                                    " differs from budget " + std::to_string(budget));
            if (row.tv) curve.points.push_back({row.nfe, *row.tv});
            result.records.push_back(std::move(row));
        }
        result.curves.push_back(std::move(curve));
    }
    return result;
}

// ---------------------------------------------------------------------------
// `contraction`: spectral-gap and tv-decay estimates of the Gibbs corrector
// kernel on the configured target at a chosen time.
// ---------------------------------------------------------------------------

struct ContractionReport {
    double t = 0.0;
    double rho_eigen = 0.0;
    double rho_decay = 0.0;
};

inline ContractionReport cmd_contraction(const ExperimentSetup& setup) {
    const ExperimentContext ctx = build_context(setup);
    const double t = setup.contraction_t > 0.0 ? setup.contraction_t : setup.delta;
    GibbsCorrectorConfig gibbs = setup.gibbs;
    gibbs.policy = ScorePolicy::Fresh;   // kernels are fresh by definition
    gibbs.threshold = std::nullopt;      // the selective gate breaks reversibility
    gibbs.scan = ScanKind::Random;       // sweep compositions are not reversible either
    const DenseKernel kernel = gibbs_kernel_exact(t, gibbs, *ctx.sampler_oracle);
    const Pmf& qt = ctx.exact->marginal(t);

    ContractionReport report;
    report.t = t;
    report.rho_eigen = spectral_gap(kernel, qt).rho;
    report.rho_decay =
        tv_decay_rate(kernel, qt, Pmf::point(setup.target.space, 0), setup.decay_steps).rho;
    return report;
}

}  // namespace gadd

// Copyright 2026 The undistort Authors
// SPDX-License-Identifier: Apache-2.0

#include "undistort/config.hpp"
#include "undistort/io.hpp"
#include "undistort/metrics.hpp"
#include "undistort/scene.hpp"
#include "undistort/solver.hpp"
#include "undistort/synth.hpp"
#include "undistort/warpstitch.hpp"

#include "CLI11.hpp"
#include "json.hpp"

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <cstdlib>
#include <exception>
#include <filesystem>
#include <functional>
#include <iostream>
#include <map>
#include <memory>
#include <string>
#include <thread>
#include <vector>

namespace fs = std::filesystem;
using nlohmann::json;
using namespace undistort;

namespace {

constexpr int exit_usage = 1;
constexpr int exit_input = 2;
constexpr int exit_numerical = 3;

int exit_code_for(ErrorCode code)
{
    switch (code) {
    case ErrorCode::point_behind_camera:
    case ErrorCode::degenerate_distance:
    case ErrorCode::non_positive_focal:
    case ErrorCode::infeasible_render:
    case ErrorCode::non_finite_gradient:
    case ErrorCode::initialization_failed:
    case ErrorCode::degenerate_control_points:
    case ErrorCode::degenerate_configuration:
    case ErrorCode::insufficient_overlap:
        return exit_numerical;
    default:
        return exit_input;
    }
}

void report_error(const std::string& code, const std::string& message, const std::optional<std::size_t>& offset = {})
{
    json j{{"error", code}, {"message", message}};
    if (offset) {
        j["offset"] = *offset;
    }
    std::cerr << j.dump() << std::endl;
}

/// Runs fn(i) for i in [0, n) on up to `jobs` threads; the first failure by index is rethrown.
void parallel_for(int n, int jobs, const std::function<void(int)>& fn)
{
    std::vector<std::exception_ptr> errors(static_cast<std::size_t>(n));
    std::atomic<int> next{0};
    auto worker = [&] {
        for (int i = next++; i < n; i = next++) {
            try {
                fn(i);
            } catch (...) {
                errors[static_cast<std::size_t>(i)] = std::current_exception();
            }
        }
    };
    const int threads = std::max(1, std::min(jobs, n));
    std::vector<std::thread> pool;
    for (int t = 1; t < threads; ++t) {
        pool.emplace_back(worker);
    }
    worker();
    for (auto& th : pool) {
        th.join();
    }
    for (const auto& e : errors) {
        if (e) {
            std::rethrow_exception(e);
        }
    }
}

std::string numbered(const char* prefix, int i, const char* suffix)
{
    char buf[64];
    std::snprintf(buf, sizeof buf, "%s_%04d%s", prefix, i, suffix);
    return buf;
}

struct ConfigFlags
{
    std::string file;
    std::vector<std::string> sets;
    int jobs = 1;

    void add_to(CLI::App* cmd)
    {
        cmd->add_option("--config", file, "key = value configuration file")->check(CLI::ExistingFile);
        cmd->add_option("--set", sets, "override one configuration key (key=value), repeatable");
        cmd->add_option("--jobs", jobs, "worker threads")->check(CLI::PositiveNumber);
    }

    /// Defaults, then the config file, then per-file overrides, then --set.
    Config resolve(const std::vector<std::pair<std::string, std::string>>& file_overrides = {}) const
    {
        Config c;
        if (const char* env = std::getenv("UNDISTORT_SEED")) {
            set_config_value(c, "seed", env);
        }
        if (!file.empty()) {
            apply_config_text(c, io::read_file(file));
        }
        for (const auto& [k, v] : file_overrides) {
            set_config_value(c, k, v);
        }
        for (const auto& s : sets) {
            apply_override(c, s);
        }
        validate_config(c);
        return c;
    }
};

void emit_config(const fs::path& path, const Config& config)
{
    io::write_file_atomic(path, resolved_config_text(config));
}

fs::path sibling(const fs::path& path, const std::string& new_extension)
{
    fs::path p = path;
    p.replace_extension(new_extension);
    return p;
}

struct LoadedProblem
{
    io::ProblemFile file;
    std::shared_ptr<const FaceModel> model;
};

LoadedProblem load_problem(const fs::path& path)
{
    LoadedProblem p;
    p.file = io::problem_from_json(io::parse_json(io::read_file(path), path.string()));
    const fs::path model_path = path.parent_path() / p.file.model_path;
    p.model = std::make_shared<const FaceModel>(io::read_model(model_path));
    if (p.file.landmarks.size() != p.model->n_landmarks()) {
        throw Error(ErrorCode::dimension_mismatch, "problem has " + std::to_string(p.file.landmarks.size()) +
                                                       " landmarks, model has " +
                                                       std::to_string(p.model->n_landmarks()));
    }
    return p;
}

InversionProblem make_problem(const LoadedProblem& lp, const Config& config)
{
    InversionProblem p;
    p.observed = lp.file.landmarks;
    p.model = lp.model;
    p.width = lp.file.width;
    p.height = lp.file.height;
    p.init_camera = lp.file.init_camera;
    p.config = config.solver;
    return p;
}

// ---------------------------------------------------------------- synth

struct SynthArgs
{
    std::optional<std::uint64_t> seed;
    int count = 100;
    std::string out;
    std::optional<double> noise;
    bool images = false;
    double scale = 4.0;
    ConfigFlags flags;
};

int run_synth(const SynthArgs& a)
{
    Config config = a.flags.resolve();
    if (a.seed) {
        config.seed = *a.seed;
    }
    if (a.noise) {
        config.synth.noise_sigma = *a.noise;
    }
    validate_config(config);
    if (!(a.scale > 0.0)) {
        throw Error(ErrorCode::invalid_argument, "--scale must be positive");
    }
    const fs::path dir = a.out;
    fs::create_directories(dir);
    auto model = std::make_shared<const FaceModel>(
        synthesize_model(config.model_seed, config.synth.n_landmarks, config.synth.latent_dim));
    io::write_model(dir / "model.json", *model);

    parallel_for(a.count, a.flags.jobs, [&](int i) {
        const SyntheticInstance inst = generate(instance_seed(config.seed, i), config.synth, model);
        io::ProblemFile pf;
        pf.width = config.synth.width;
        pf.height = config.synth.height;
        pf.landmarks = inst.observed;
        pf.model_path = "model.json";
        io::write_file_atomic(dir / numbered("problem", i, ".json"), io::dump_json(io::problem_to_json(pf)));
        io::write_file_atomic(dir / numbered("truth", i, ".json"), io::dump_json(io::truth_to_json(inst)));
        if (a.images) {
            const CameraState far_cam = set_distance(inst.true_cam, a.scale * inst.true_distance());
            const SceneRender near = render_scene(*model, inst.true_latent, inst.true_cam);
            const SceneRender far = render_scene(*model, inst.true_latent, far_cam);
            io::write_image(dir / numbered("image", i, ".png"), near.image);
            io::write_depth(dir / numbered("depth", i, ".pfm"), near.depth);
            io::write_image(dir / numbered("reference", i, ".png"), far.image);
            const LandmarkSet far_lm = render_landmarks(*model, inst.true_latent, far_cam);
            io::write_file_atomic(dir / numbered("reference", i, ".landmarks.json"),
                                  io::dump_json(io::landmarks_to_json(far_lm.points)));
        }
    });
    emit_config(dir / "config.resolved.toml", config);
    std::cout << "wrote " << a.count << " instances to " << dir.string() << "\n";
    return 0;
}

// ---------------------------------------------------------------- invert

struct InvertArgs
{
    std::string problem;
    std::string out;
    std::string ablate;
    std::string trace;
    ConfigFlags flags;
};

int run_invert(const InvertArgs& a)
{
    const LoadedProblem lp = load_problem(a.problem);
    Config config = a.flags.resolve(lp.file.config);
    if (!a.ablate.empty()) {
        config.solver.ablation = Ablation::parse(a.ablate);
    }
    const InversionSolution sol = solve(make_problem(lp, config));
    const fs::path out = a.out;
    io::write_file_atomic(out, io::dump_json(io::solution_to_json(sol, config.solver.ablation)));
    const fs::path trace = a.trace.empty() ? sibling(out, ".trace.jsonl") : fs::path(a.trace);
    io::write_file_atomic(trace, io::trace_jsonl(sol.trace));
    emit_config(sibling(out, ".config.toml"), config);
    std::printf("distance %.6g m  focal %.6g px  landmark rms %.3g\n", sol.distance(), sol.cam.focal(),
                sol.landmark_rms);
    return 0;
}

// ---------------------------------------------------------------- correct / dolly

struct CorrectArgs
{
    std::string problem;
    std::string solution;
    std::string image;
    std::string depth;
    double scale = 4.0;
    std::string scales = "1,2,4,8";
    std::string out;
    ConfigFlags flags;
};

struct CorrectionInputs
{
    LoadedProblem lp;
    InversionSolution sol;
    Image image;
    DepthImage depth;
    Config config;
};

CorrectionInputs load_correction_inputs(const CorrectArgs& a)
{
    if (a.depth.empty()) {
        throw Error(ErrorCode::invalid_argument, "portrait correction needs a depth map; pass one with --depth");
    }
    CorrectionInputs in;
    in.lp = load_problem(a.problem);
    in.config = a.flags.resolve(in.lp.file.config);
    in.sol = io::solution_from_json(io::parse_json(io::read_file(a.solution), a.solution));
    in.image = io::read_image(a.image);
    in.depth = io::read_depth(a.depth);
    if (in.image.width != in.lp.file.width || in.image.height != in.lp.file.height) {
        throw Error(ErrorCode::dimension_mismatch, "image size differs from the problem's image_size");
    }
    return in;
}

Image correct_one(const CorrectionInputs& in, double scale, int threads, const fs::path& landmarks_out)
{
    CorrectionOptions opt = in.config.correct;
    opt.threads = threads;
    const Correction c = correct_portrait(in.image, in.depth, in.lp.file.landmarks, *in.lp.model, in.sol, scale, opt);
    const LandmarkSet far = render_landmarks(*in.lp.model, in.sol.latent, c.far_cam);
    io::write_file_atomic(landmarks_out, io::dump_json(io::landmarks_to_json(far.points)));
    return c.image;
}

int run_correct(const CorrectArgs& a)
{
    const CorrectionInputs in = load_correction_inputs(a);
    const fs::path out = a.out;
    const Image img = correct_one(in, a.scale, a.flags.jobs, sibling(out, ".landmarks.json"));
    io::write_image(out, img);
    emit_config(sibling(out, ".config.toml"), in.config);
    return 0;
}

std::vector<double> parse_scales(const std::string& text)
{
    std::vector<double> scales;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        const double v = detail::parse_number<double>("--scales", detail::trim(item));
        if (!(v > 0.0)) {
            throw Error(ErrorCode::invalid_argument, "scales must be positive");
        }
        scales.push_back(v);
    }
    if (scales.empty()) {
        throw Error(ErrorCode::invalid_argument, "--scales is empty");
    }
    return scales;
}

int run_dolly(const CorrectArgs& a)
{
    const std::vector<double> scales = parse_scales(a.scales);
    const CorrectionInputs in = load_correction_inputs(a);
    const fs::path dir = a.out;
    fs::create_directories(dir);
    json frames = json::array();
    for (std::size_t i = 0; i < scales.size(); ++i) {
        const fs::path frame = dir / numbered("frame", static_cast<int>(i), ".png");
        io::write_image(frame, correct_one(in, scales[i], a.flags.jobs,
                                           dir / numbered("frame", static_cast<int>(i), ".landmarks.json")));
        frames.push_back({{"file", frame.filename().string()}, {"scale", scales[i]}});
    }
    io::write_file_atomic(dir / "frames.json", io::dump_json(frames));
    emit_config(dir / "config.resolved.toml", in.config);
    return 0;
}

// ---------------------------------------------------------------- eval

struct EvalArgs
{
    std::string pairs;
    std::string out;
    ConfigFlags flags;
};

Points2 read_landmarks_px(const fs::path& path, const Image& img)
{
    const json j = io::parse_json(io::read_file(path), path.string());
    if (!j.contains("landmarks")) {
        throw Error(ErrorCode::invalid_argument, path.string() + " has no \"landmarks\" array");
    }
    return to_pixels(io::points_from_json<2>(j["landmarks"], "landmarks"), img.width, img.height);
}

int run_eval(const EvalArgs& a)
{
    const Config config = a.flags.resolve();
    const fs::path manifest = a.pairs;
    const json m = io::parse_json(io::read_file(manifest), manifest.string());
    const json& list = m.is_array() ? m : m.at("items");
    if (!list.is_array() || list.empty()) {
        throw Error(ErrorCode::invalid_argument, "manifest must list at least one item");
    }
    const fs::path base = manifest.parent_path();
    std::vector<SuiteItem> items(list.size());
    parallel_for(static_cast<int>(list.size()), a.flags.jobs, [&](int idx) {
        const json& e = list[static_cast<std::size_t>(idx)];
        SuiteItem& item = items[static_cast<std::size_t>(idx)];
        item.id = e.contains("id") ? e["id"].get<std::string>() : std::to_string(idx);
        try {
            item.output = io::read_image(base / e.at("output").get<std::string>());
            item.reference = io::read_image(base / e.at("reference").get<std::string>());
            if (e.contains("output_landmarks") && e.contains("reference_landmarks")) {
                item.output_landmarks = read_landmarks_px(base / e["output_landmarks"].get<std::string>(), item.output);
                item.reference_landmarks =
                    read_landmarks_px(base / e["reference_landmarks"].get<std::string>(), item.reference);
            }
            if (e.contains("mask")) {
                item.mask = io::read_mask(base / e["mask"].get<std::string>());
            }
            if (e.contains("eye_indices")) {
                const auto eyes = e["eye_indices"].get<std::vector<int>>();
                if (eyes.size() != 2) {
                    throw Error(ErrorCode::invalid_argument, "eye_indices must have two entries");
                }
                item.eyes = {eyes[0], eyes[1]};
            }
        } catch (const std::exception& ex) {
            item.load_error = ex.what();
        }
    });
    const SuiteReport report = evaluate_suite(items, a.flags.jobs, config.ssim);
    const fs::path out = a.out;
    io::write_file_atomic(out, suite_csv(report));
    io::write_file_atomic(sibling(out, ".json"), io::dump_json(io::suite_to_json(report)));
    emit_config(sibling(out, ".config.toml"), config);
    int failed = 0;
    for (const auto& r : report.rows) {
        if (!r.error.empty()) {
            ++failed;
            report_error("ItemFailed", r.id + ": " + r.error);
        }
    }
    std::printf("%zu items, %d failed; mean lmk_e %s psnr %s ssim %s\n", report.rows.size(), failed,
                format_metric(report.mean.lmk_e).c_str(), format_metric(report.mean.psnr_db).c_str(),
                format_metric(report.mean.ssim).c_str());
    return 0;
}

// ---------------------------------------------------------------- ablate

struct AblateArgs
{
    std::string suite;
    std::string out;
    std::string variants = "full,no_reparam,no_near_init,no_schedule,no_all";
    ConfigFlags flags;
};

double median(std::vector<double> v)
{
    if (v.empty()) {
        return std::numeric_limits<double>::quiet_NaN();
    }
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

double quantile(std::vector<double> v, double q)
{
    if (v.empty()) {
        return std::numeric_limits<double>::quiet_NaN();
    }
    std::sort(v.begin(), v.end());
    const double pos = q * static_cast<double>(v.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const auto hi = std::min(lo + 1, v.size() - 1);
    return v[lo] + (pos - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

int run_ablate(const AblateArgs& a)
{
    const Config config = a.flags.resolve();
    std::vector<std::string> variants;
    {
        std::stringstream ss(a.variants);
        std::string v;
        while (std::getline(ss, v, ',')) {
            Ablation::parse(v);
            variants.push_back(v);
        }
    }
    std::vector<fs::path> problems;
    for (const auto& entry : fs::directory_iterator(a.suite)) {
        const std::string name = entry.path().filename().string();
        if (name.rfind("problem_", 0) == 0 && entry.path().extension() == ".json") {
            problems.push_back(entry.path());
        }
    }
    std::sort(problems.begin(), problems.end());
    if (problems.empty()) {
        throw Error(ErrorCode::invalid_argument, "no problem_*.json files in " + a.suite);
    }

    struct Cell
    {
        double distance = 0.0;
        double error = 0.0;
        std::string status = "ok";
    };
    const std::size_t nv = variants.size();
    std::vector<Cell> cells(problems.size() * nv);
    std::vector<double> truths(problems.size());
    std::vector<std::string> ids(problems.size());
    parallel_for(static_cast<int>(problems.size()), a.flags.jobs, [&](int pi) {
        const auto p = static_cast<std::size_t>(pi);
        const fs::path& path = problems[p];
        std::string stem = path.stem().string();
        ids[p] = stem.substr(std::string("problem_").size());
        const LoadedProblem lp = load_problem(path);
        const fs::path truth_path = path.parent_path() / ("truth_" + ids[p] + ".json");
        truths[p] = io::truth_from_json(io::parse_json(io::read_file(truth_path), truth_path.string())).distance;
        for (std::size_t v = 0; v < nv; ++v) {
            Config c = config;
            c.solver.ablation = Ablation::parse(variants[v]);
            Cell& cell = cells[p * nv + v];
            try {
                const InversionSolution sol = solve(make_problem(lp, c));
                cell.distance = sol.distance();
                cell.error = std::abs(cell.distance - truths[p]) / truths[p];
            } catch (const Error& e) {
                cell.status = std::string(to_string(e.code()));
                cell.distance = std::numeric_limits<double>::quiet_NaN();
                cell.error = std::numeric_limits<double>::quiet_NaN();
            }
        }
    });

    std::string csv = "id,variant,true_distance,distance,rel_error,status\n";
    char buf[256];
    for (std::size_t p = 0; p < problems.size(); ++p) {
        for (std::size_t v = 0; v < nv; ++v) {
            const Cell& c = cells[p * nv + v];
            std::snprintf(buf, sizeof buf, "%s,%s,%.9g,%.9g,%.9g,%s\n", ids[p].c_str(), variants[v].c_str(),
                          truths[p], c.distance, c.error, c.status.c_str());
            csv += buf;
        }
    }
    json summary = json::object();
    std::printf("%-14s %8s %10s %10s %10s %8s\n", "variant", "n", "median", "p25", "p75", "failed");
    for (std::size_t v = 0; v < nv; ++v) {
        std::vector<double> errs;
        int failed = 0;
        for (std::size_t p = 0; p < problems.size(); ++p) {
            const Cell& c = cells[p * nv + v];
            if (c.status == "ok") {
                errs.push_back(c.error);
            } else {
                ++failed;
            }
        }
        // Failures count as unbounded error in the median.
        std::vector<double> with_failures = errs;
        with_failures.insert(with_failures.end(), static_cast<std::size_t>(failed),
                             std::numeric_limits<double>::infinity());
        const double med = median(with_failures);
        summary[variants[v]] = {{"n", errs.size()},
                                {"failed", failed},
                                {"median_rel_error", std::isfinite(med) ? json(med) : json("inf")},
                                {"p25_rel_error", quantile(errs, 0.25)},
                                {"p75_rel_error", quantile(errs, 0.75)}};
        std::printf("%-14s %8zu %10.4g %10.4g %10.4g %8d\n", variants[v].c_str(), errs.size(), med,
                    quantile(errs, 0.25), quantile(errs, 0.75), failed);
    }
    const fs::path out = a.out;
    io::write_file_atomic(out, csv);
    io::write_file_atomic(sibling(out, ".summary.json"), io::dump_json(summary));
    emit_config(sibling(out, ".config.toml"), config);
    return 0;
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"undistort: recover camera distance from face landmarks and re-render portraits from farther away"};
    app.require_subcommand(1);

    SynthArgs synth;
    auto* cs = app.add_subcommand("synth", "generate a seeded synthetic landmark suite");
    cs->add_option("--seed", synth.seed, "suite seed (default: UNDISTORT_SEED, then config 'seed')");
    cs->add_option("--count", synth.count, "number of instances")->check(CLI::NonNegativeNumber);
    cs->add_option("--out", synth.out, "output directory")->required();
    cs->add_option("--noise", synth.noise, "landmark noise sigma, normalized units")->check(CLI::NonNegativeNumber);
    cs->add_flag("--images", synth.images, "also render scene images, depth maps and far references");
    cs->add_option("--scale", synth.scale, "distance multiple of the far reference renders");
    synth.flags.add_to(cs);

    InvertArgs invert;
    auto* ci = app.add_subcommand("invert", "fit camera and face to a landmark problem");
    ci->add_option("problem", invert.problem, "problem JSON")->required()->check(CLI::ExistingFile);
    ci->add_option("--out", invert.out, "solution JSON")->required();
    ci->add_option("--ablate", invert.ablate, "comma list of no_reparam, no_near_init, no_schedule, no_all");
    ci->add_option("--trace", invert.trace, "trace JSON lines (default: next to the solution)");
    invert.flags.add_to(ci);

    CorrectArgs correct;
    auto* cc = app.add_subcommand("correct", "re-render a portrait from a larger distance");
    cc->add_option("problem", correct.problem, "problem JSON")->required()->check(CLI::ExistingFile);
    cc->add_option("solution", correct.solution, "solution JSON")->required()->check(CLI::ExistingFile);
    cc->add_option("--image", correct.image, "input image (png, ppm, pfm)")->required()->check(CLI::ExistingFile);
    cc->add_option("--depth", correct.depth, "depth map (pfm, or 16-bit png with .json scale sidecar)");
    cc->add_option("--scale", correct.scale, "distance multiple")->check(CLI::PositiveNumber);
    cc->add_option("--out", correct.out, "output image")->required();
    correct.flags.add_to(cc);

    CorrectArgs dolly;
    auto* cd = app.add_subcommand("dolly", "render a sequence of distance multiples");
    cd->add_option("problem", dolly.problem, "problem JSON")->required()->check(CLI::ExistingFile);
    cd->add_option("solution", dolly.solution, "solution JSON")->required()->check(CLI::ExistingFile);
    cd->add_option("--image", dolly.image, "input image")->required()->check(CLI::ExistingFile);
    cd->add_option("--depth", dolly.depth, "depth map");
    cd->add_option("--scales", dolly.scales, "comma-separated distance multiples");
    cd->add_option("--out", dolly.out, "output directory")->required();
    dolly.flags.add_to(cd);

    EvalArgs eval;
    auto* ce = app.add_subcommand("eval", "landmark error, PSNR and SSIM over a manifest of image pairs");
    ce->add_option("--pairs", eval.pairs, "manifest JSON")->required()->check(CLI::ExistingFile);
    ce->add_option("--out", eval.out, "report CSV (a .json mirror is written next to it)")->required();
    eval.flags.add_to(ce);

    AblateArgs ablate;
    auto* ca = app.add_subcommand("ablate", "distance error of each solver variant over a synthetic suite");
    ca->add_option("--suite", ablate.suite, "directory written by synth")->required()->check(CLI::ExistingDirectory);
    ca->add_option("--out", ablate.out, "per-instance CSV (a .summary.json is written next to it)")->required();
    ca->add_option("--variants", ablate.variants, "comma list of full, no_reparam, no_near_init, no_schedule, no_all");
    ablate.flags.add_to(ca);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        report_error("UsageError", e.what());
        std::cerr << app.help() << std::endl;
        return exit_usage;
    }

    try {
        if (cs->parsed()) {
            return run_synth(synth);
        }
        if (ci->parsed()) {
            return run_invert(invert);
        }
        if (cc->parsed()) {
            return run_correct(correct);
        }
        if (cd->parsed()) {
            return run_dolly(dolly);
        }
        if (ce->parsed()) {
            return run_eval(eval);
        }
        if (ca->parsed()) {
            return run_ablate(ablate);
        }
    } catch (const Error& e) {
        report_error(std::string(to_string(e.code())), e.what(), e.offset());
        return exit_code_for(e.code());
    } catch (const fs::filesystem_error& e) {
        report_error("IoError", e.what());
        return exit_input;
    } catch (const std::exception& e) {
        report_error("InputError", e.what());
        return exit_input;
    }
    return exit_usage;
}

#include <llgm.h>

#include <CLI11.hpp>

#include <algorithm>
#include <cctype>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <limits>
#include <string>
#include <vector>

namespace {

constexpr int kExitOk = 0;
constexpr int kExitRuntime = 1;
constexpr int kExitUsage = 2;

int fail(llgm_status status) {
    std::fprintf(stderr, "error: %s\n", llgm_last_error());
    return status == LLGM_ERROR_INVALID_ARGUMENT ? kExitUsage : kExitRuntime;
}

int usage_error(const std::string& message) {
    std::fprintf(stderr, "error: %s\n", message.c_str());
    return kExitUsage;
}

template <typename T, void (*Free)(T*)>
struct Handle {
    T* ptr = nullptr;
    Handle() = default;
    Handle(const Handle&) = delete;
    Handle& operator=(const Handle&) = delete;
    ~Handle() { Free(ptr); }
    T** out() { return &ptr; }
    operator T*() const { return ptr; }
};

using ImagePtr = Handle<llgm_image, llgm_image_free>;
using ModelPtr = Handle<llgm_model, llgm_model_free>;
using DictPtr = Handle<llgm_dictionary, llgm_dict_free>;
using ResultPtr = Handle<llgm_enhance_result, llgm_enhance_result_free>;

double mean_luminance(const llgm_image* img) {
    const int c = llgm_image_channels(img);
    const float* d = llgm_image_data(img);
    const std::size_t n =
        static_cast<std::size_t>(llgm_image_height(img)) * llgm_image_width(img);
    double sum = 0.0;
    for (std::size_t p = 0; p < n; ++p) {
        if (c >= 3)
            sum += 0.299 * d[p * c] + 0.587 * d[p * c + 1] + 0.114 * d[p * c + 2];
        else
            sum += d[p * c];
    }
    return n ? sum / static_cast<double>(n) : 0.0;
}

void apply_threads(const CLI::App* sub, int threads) {
    if (sub->count("--threads") == 0) {
        threads = 0;
        if (const char* env = std::getenv("LLGM_THREADS")) threads = std::atoi(env);
    }
    llgm_set_threads(threads < 0 ? 0 : threads);
}

void add_common(CLI::App* sub, int& threads, std::string& config_path) {
    sub->add_option("--threads", threads, "worker thread cap (0 = hardware)")
        ->check(CLI::Range(0, std::numeric_limits<int>::max()));
    sub->add_option("--config", config_path,
                    "key=value config file (keys are long option names); flags take precedence");
}

std::string trimmed(const std::string& s) {
    const auto first = s.find_first_not_of(" \t\r");
    if (first == std::string::npos) return "";
    const auto last = s.find_last_not_of(" \t\r");
    return s.substr(first, last - first + 1);
}

// Flat key=value file merged under the command line: keys name long options,
// values pass through the option's own conversion and validation, and any
// option already set by a flag keeps its flag value.
int apply_config_file(CLI::App* sub, const std::string& path) {
    std::ifstream in(path);
    if (!in) return usage_error("cannot read config file: " + path);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const std::string entry = trimmed(line);
        if (entry.empty() || entry[0] == '#') continue;
        const std::string where = path + ":" + std::to_string(lineno);
        const auto eq = entry.find('=');
        if (eq == std::string::npos) return usage_error(where + ": expected key=value");
        const std::string key = trimmed(entry.substr(0, eq));
        const std::string value = trimmed(entry.substr(eq + 1));
        CLI::Option* opt = key.empty() || key == "config" || key == "help"
                               ? nullptr
                               : sub->get_option_no_throw("--" + key);
        if (!opt) return usage_error(where + ": unknown key '" + key + "'");
        if (opt->count() > 0) continue;
        try {
            opt->add_result(value);
            opt->run_callback();
        } catch (const CLI::Error& e) {
            return usage_error(where + ": " + e.what());
        }
    }
    return kExitOk;
}

struct FitArgs {
    std::string input;
    std::string out = "model.llgm";
    std::string log, config;
    llgm_fit_options opts;
    int threads = 0;
};

int run_fit(const FitArgs& a) {
    if (!(a.opts.lr > 0.0)) return usage_error("--lr must be positive");
    llgm_fit_options opts = a.opts;
    opts.log_csv = a.log.empty() ? nullptr : a.log.c_str();

    ImagePtr img;
    llgm_status st = llgm_image_load(a.input.c_str(), img.out());
    if (st != LLGM_OK) return fail(st);

    ModelPtr model;
    double psnr = 0.0;
    st = llgm_fit(img, &opts, model.out(), nullptr, &psnr);
    if (st != LLGM_OK) return fail(st);

    st = llgm_model_save(model, a.out.c_str());
    if (st != LLGM_OK) return fail(st);

    std::printf("fit: %dx%d input, %d primitives across %d levels, %d iterations\n",
                llgm_image_height(img), llgm_image_width(img), llgm_model_primitives(model),
                llgm_model_levels(model), opts.iterations);
    std::printf("final psnr: %.4f dB\n", psnr);
    std::printf("wrote: %s\n", a.out.c_str());
    return kExitOk;
}

struct DictArgs {
    std::string corpus;
    std::string out = "dict.llgd";
    std::string export_csv, config;
    std::vector<double> targets;
    llgm_dict_options opts;
    int threads = 0;
};

int run_dict(const DictArgs& a) {
    if (a.corpus.empty()) return usage_error("--corpus is required");
    for (const double t : a.targets)
        if (!(t > 0.0 && t < 1.0))
            return usage_error("exposure targets must lie strictly between 0 and 1");

    std::vector<std::string> paths;
    for (const auto& entry : std::filesystem::directory_iterator(a.corpus)) {
        if (!entry.is_regular_file()) continue;
        std::string ext = entry.path().extension().string();
        std::transform(ext.begin(), ext.end(), ext.begin(),
                       [](unsigned char ch) { return static_cast<char>(std::tolower(ch)); });
        if (ext == ".png" || ext == ".ppm") paths.push_back(entry.path().string());
    }
    std::sort(paths.begin(), paths.end());
    if (paths.empty())
        return usage_error("no .png/.ppm images in corpus directory: " + a.corpus);

    std::vector<const char*> cpaths;
    cpaths.reserve(paths.size());
    for (const std::string& p : paths) cpaths.push_back(p.c_str());

    llgm_dict_options opts = a.opts;
    if (!a.targets.empty()) {
        opts.e_targets = a.targets.data();
        opts.e_target_count = a.targets.size();
    }
    const std::string tag = std::filesystem::path(a.corpus).filename().string();
    opts.corpus_tag = tag.c_str();
    opts.export_csv_dir = a.export_csv.empty() ? nullptr : a.export_csv.c_str();

    const std::size_t target_count = a.targets.empty() ? 4 : a.targets.size();
    std::printf("dict: %zu corpus images x %zu exposure targets = %zu coefficient points\n",
                paths.size(), target_count, paths.size() * target_count);

    DictPtr dict;
    double inertia = 0.0;
    const llgm_status st = llgm_dict_build(cpaths.data(), cpaths.size(), &opts, dict.out(),
                                           &inertia);
    if (st != LLGM_OK) return fail(st);

    const llgm_status save_st = llgm_dict_save(dict, a.out.c_str());
    if (save_st != LLGM_OK) return fail(save_st);

    std::printf("inertia: %.8g\n", inertia);
    std::printf("atoms: %d learned + 1 identity, order %d\n", llgm_dict_atoms(dict),
                llgm_dict_order(dict));
    if (!a.export_csv.empty()) std::printf("exported csv under: %s\n", a.export_csv.c_str());
    std::printf("wrote: %s\n", a.out.c_str());
    return kExitOk;
}

struct EnhanceArgs {
    std::string input, model, dict;
    std::string out = "enhanced.png";
    std::string dump_gain, dump_omega, log, config;
    llgm_enhance_options opts;
    int threads = 0;
};

int save_gain_dump(const llgm_enhance_result* res, const std::string& path) {
    ImagePtr gain;
    llgm_status st = llgm_enhance_result_gain(res, gain.out());
    if (st != LLGM_OK) return fail(st);

    const int h = llgm_image_height(gain), w = llgm_image_width(gain);
    const int c = llgm_image_channels(gain);
    const float* d = llgm_image_data(gain);
    const std::size_t n = static_cast<std::size_t>(h) * w * c;
    float lo = std::numeric_limits<float>::max();
    float hi = std::numeric_limits<float>::lowest();
    for (std::size_t i = 0; i < n; ++i) {
        lo = std::min(lo, d[i]);
        hi = std::max(hi, d[i]);
    }
    const float span = hi > lo ? hi - lo : 1.0f;
    std::vector<float> norm(n);
    for (std::size_t i = 0; i < n; ++i) norm[i] = (d[i] - lo) / span;

    ImagePtr plot;
    st = llgm_image_create(h, w, c, norm.data(), plot.out());
    if (st != LLGM_OK) return fail(st);
    st = llgm_image_save(plot, path.c_str());
    if (st != LLGM_OK) return fail(st);
    std::printf("gain range: [%.4f, %.4f], normalized plot: %s\n", lo, hi, path.c_str());
    return kExitOk;
}

int save_omega_dump(const llgm_enhance_result* res, const std::string& dir) {
    ImagePtr weights;
    llgm_status st = llgm_enhance_result_weights(res, weights.out());
    if (st != LLGM_OK) return fail(st);

    std::filesystem::create_directories(dir);
    const int h = llgm_image_height(weights), w = llgm_image_width(weights);
    const int ch = llgm_image_channels(weights);
    const float* d = llgm_image_data(weights);
    std::vector<float> plane(static_cast<std::size_t>(h) * w);
    for (int k = 0; k < ch; ++k) {
        for (std::size_t p = 0; p < plane.size(); ++p) plane[p] = d[p * ch + k];
        ImagePtr gray;
        st = llgm_image_create(h, w, 1, plane.data(), gray.out());
        if (st != LLGM_OK) return fail(st);
        char name[32];
        std::snprintf(name, sizeof(name), "omega_%02d.png", k);
        st = llgm_image_save(gray, (std::filesystem::path(dir) / name).string().c_str());
        if (st != LLGM_OK) return fail(st);
    }
    std::printf("wrote %d weight planes under: %s\n", ch, dir.c_str());
    return kExitOk;
}

int run_enhance(const EnhanceArgs& a) {
    if (a.model.empty()) return usage_error("--model is required");
    if (a.dict.empty()) return usage_error("--dict is required");
    if (!(a.opts.e_target > 0.0 && a.opts.e_target < 1.0))
        return usage_error("--etarget must lie strictly between 0 and 1");

    llgm_enhance_options opts = a.opts;
    opts.log_csv = a.log.empty() ? nullptr : a.log.c_str();

    ImagePtr img;
    llgm_status st = llgm_image_load(a.input.c_str(), img.out());
    if (st != LLGM_OK) return fail(st);
    ModelPtr model;
    st = llgm_model_load(a.model.c_str(), model.out());
    if (st != LLGM_OK) return fail(st);
    DictPtr dict;
    st = llgm_dict_load(a.dict.c_str(), dict.out());
    if (st != LLGM_OK) return fail(st);

    ResultPtr res;
    st = llgm_enhance(img, model, dict, &opts, res.out());
    if (st != LLGM_OK) return fail(st);

    ImagePtr out;
    st = llgm_enhance_result_output(res, out.out());
    if (st != LLGM_OK) return fail(st);
    st = llgm_image_save(out, a.out.c_str());
    if (st != LLGM_OK) return fail(st);

    if (!a.dump_gain.empty()) {
        const int rc = save_gain_dump(res, a.dump_gain);
        if (rc != kExitOk) return rc;
    }
    if (!a.dump_omega.empty()) {
        const int rc = save_omega_dump(res, a.dump_omega);
        if (rc != kExitOk) return rc;
    }

    const double lum_in = mean_luminance(img);
    const double lum_out = mean_luminance(out);
    std::printf("enhance: %dx%d input, %d primitives, %d atoms, %d iterations\n",
                llgm_image_height(img), llgm_image_width(img), llgm_model_primitives(model),
                llgm_dict_atoms(dict), opts.iterations);
    std::printf("final loss: %.6f\n", llgm_enhance_result_final_loss(res));
    std::printf("mean luminance: %.4f -> %.4f (delta %+.4f)\n", lum_in, lum_out,
                lum_out - lum_in);
    std::printf("wrote: %s\n", a.out.c_str());
    return kExitOk;
}

struct EvalArgs {
    std::string pred, ref, config;
    std::uint64_t seed = 0;
    int threads = 0;
};

int run_eval(const EvalArgs& a) {
    if (a.pred.empty()) return usage_error("--pred is required");
    ImagePtr pred;
    llgm_status st = llgm_image_load(a.pred.c_str(), pred.out());
    if (st != LLGM_OK) return fail(st);
    ImagePtr ref;
    if (!a.ref.empty()) {
        st = llgm_image_load(a.ref.c_str(), ref.out());
        if (st != LLGM_OK) return fail(st);
    }

    llgm_metrics m;
    st = llgm_evaluate(pred, ref.ptr, a.seed, &m);
    if (st != LLGM_OK) return fail(st);

    std::string json = "{";
    auto add = [&json](const char* key, double value) {
        char buf[64];
        std::snprintf(buf, sizeof(buf), "\"%s\": %.6g", key, value);
        if (json.size() > 1) json += ", ";
        json += buf;
    };
    if (m.has_psnr) add("psnr", m.psnr);
    if (m.has_ssim) add("ssim", m.ssim);
    if (m.has_loe) add("loe", m.loe);
    add("de", m.de);
    add("eme", m.eme);
    json += "}";
    std::printf("%s\n", json.c_str());
    return kExitOk;
}

int run_gradcheck(std::uint64_t seed) {
    llgm_gradcheck_entry entries[16];
    std::size_t count = 0;
    int pass = 0;
    const llgm_status st = llgm_gradcheck(seed, entries, 16, &count, &pass);
    if (st != LLGM_OK) return fail(st);
    for (std::size_t i = 0; i < count; ++i)
        std::printf("%-14s max rel err %10.3e  %s\n", entries[i].name, entries[i].max_error,
                    entries[i].pass ? "pass" : "FAIL");
    std::printf("gradcheck: %s (%zu classes, seed %llu)\n", pass ? "PASS" : "FAIL", count,
                static_cast<unsigned long long>(seed));
    return pass ? kExitOk : kExitRuntime;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"2D Gaussian image codec with training-free low-light enhancement"};
    app.require_subcommand(1);

    FitArgs fit_args;
    llgm_fit_options_init(&fit_args.opts);
    CLI::App* fit = app.add_subcommand("fit", "fit an image with Gaussian primitives");
    fit->add_option("input", fit_args.input, "input image (.png/.ppm)")
        ->required()
        ->check(CLI::ExistingFile);
    fit->add_option("--gaussians", fit_args.opts.num_primitives, "total primitive count")
        ->capture_default_str()
        ->check(CLI::Range(1, std::numeric_limits<int>::max()));
    fit->add_option("--scales", fit_args.opts.scales, "pyramid levels")
        ->capture_default_str()
        ->check(CLI::Range(1, std::numeric_limits<int>::max()));
    fit->add_option("--iters", fit_args.opts.iterations, "total optimization iterations")
        ->capture_default_str()
        ->check(CLI::Range(0, std::numeric_limits<int>::max()));
    fit->add_option("--lr", fit_args.opts.lr, "learning rate")
        ->capture_default_str();
    fit->add_option("--seed", fit_args.opts.seed, "rng seed")->capture_default_str();
    fit->add_option("--out", fit_args.out, "model output path")->capture_default_str();
    fit->add_option("--log", fit_args.log, "per-iteration csv trace path");
    add_common(fit, fit_args.threads, fit_args.config);

    DictArgs dict_args;
    llgm_dict_options_init(&dict_args.opts);
    CLI::App* dict = app.add_subcommand("dict", "build a gain-curve dictionary from a corpus");
    dict->add_option("--corpus", dict_args.corpus, "directory of corpus images")
        ->check(CLI::ExistingDirectory);
    dict->add_option("--k", dict_args.opts.k, "learned atom count")
        ->capture_default_str()
        ->check(CLI::Range(1, std::numeric_limits<int>::max()));
    dict->add_option("--p", dict_args.opts.order, "curve order")
        ->capture_default_str()
        ->check(CLI::Range(1, std::numeric_limits<int>::max()));
    dict->add_option("--targets", dict_args.targets, "exposure targets")
        ->delimiter(',')
        ->default_str("0.4,0.5,0.6,0.7");
    dict->add_option("--seed", dict_args.opts.seed, "rng seed")->capture_default_str();
    dict->add_option("--out", dict_args.out, "dictionary output path")->capture_default_str();
    dict->add_option("--export-csv", dict_args.export_csv,
                     "directory for coefficient/curve csv dumps");
    add_common(dict, dict_args.threads, dict_args.config);

    EnhanceArgs enh_args;
    llgm_enhance_options_init(&enh_args.opts);
    CLI::App* enh = app.add_subcommand("enhance", "enhance a low-light image through its model");
    enh->add_option("input", enh_args.input, "input image (.png/.ppm)")
        ->required()
        ->check(CLI::ExistingFile);
    enh->add_option("--model", enh_args.model, "fitted model path")
        ->check(CLI::ExistingFile);
    enh->add_option("--dict", enh_args.dict, "curve dictionary path")
        ->check(CLI::ExistingFile);
    enh->add_option("--iters", enh_args.opts.iterations, "optimization iterations")
        ->capture_default_str()
        ->check(CLI::Range(0, std::numeric_limits<int>::max()));
    enh->add_option("--etarget", enh_args.opts.e_target, "exposure target")
        ->capture_default_str();
    enh->add_option("--seed", enh_args.opts.seed, "rng seed")->capture_default_str();
    enh->add_option("--out", enh_args.out, "output image path")->capture_default_str();
    enh->add_option("--dump-gain", enh_args.dump_gain, "normalized gain-field png path");
    enh->add_option("--dump-omega", enh_args.dump_omega,
                    "directory for per-atom weight plane pngs");
    enh->add_option("--log", enh_args.log, "loss-trace csv path");
    add_common(enh, enh_args.threads, enh_args.config);

    EvalArgs eval_args;
    CLI::App* eval = app.add_subcommand("eval", "report image quality metrics");
    eval->add_option("--pred", eval_args.pred, "image under evaluation")
        ->check(CLI::ExistingFile);
    eval->add_option("--ref", eval_args.ref, "reference image for full-reference metrics")
        ->check(CLI::ExistingFile);
    eval->add_option("--seed", eval_args.seed, "rng seed")->capture_default_str();
    add_common(eval, eval_args.threads, eval_args.config);

    std::uint64_t gradcheck_seed = 0;
    int gradcheck_threads = 0;
    std::string gradcheck_config;
    CLI::App* grad = app.add_subcommand("gradcheck", "verify analytic gradients by differences");
    grad->add_option("--seed", gradcheck_seed, "scene seed")->capture_default_str();
    add_common(grad, gradcheck_threads, gradcheck_config);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kExitOk : kExitUsage;
    }

    auto merge_config = [](CLI::App* sub, const std::string& path) {
        return path.empty() ? kExitOk : apply_config_file(sub, path);
    };

    if (fit->parsed()) {
        if (const int rc = merge_config(fit, fit_args.config)) return rc;
        apply_threads(fit, fit_args.threads);
        return run_fit(fit_args);
    }
    if (dict->parsed()) {
        if (const int rc = merge_config(dict, dict_args.config)) return rc;
        apply_threads(dict, dict_args.threads);
        return run_dict(dict_args);
    }
    if (enh->parsed()) {
        if (const int rc = merge_config(enh, enh_args.config)) return rc;
        apply_threads(enh, enh_args.threads);
        return run_enhance(enh_args);
    }
    if (eval->parsed()) {
        if (const int rc = merge_config(eval, eval_args.config)) return rc;
        apply_threads(eval, eval_args.threads);
        return run_eval(eval_args);
    }
    if (const int rc = merge_config(grad, gradcheck_config)) return rc;
    apply_threads(grad, gradcheck_threads);
    return run_gradcheck(gradcheck_seed);
}

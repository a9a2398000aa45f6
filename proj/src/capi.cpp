#include "llgm.h"

#include <algorithm>
#include <cstdio>
#include <cstring>
#include <exception>
#include <string>
#include <utility>
#include <vector>

#include "dictionary.hpp"
#include "enhancer.hpp"
#include "errors.hpp"
#include "gaussians.hpp"
#include "gradcheck.hpp"
#include "image.hpp"
#include "image_io.hpp"
#include "metrics.hpp"
#include "parallel.hpp"
#include "reconstruct.hpp"

struct llgm_image {
    llgm::Image img;
};
struct llgm_model {
    llgm::Model model;
};
struct llgm_dictionary {
    llgm::Dictionary dict;
};
struct llgm_enhance_result {
    llgm::EnhanceResult res;
};

namespace {

thread_local std::string g_last_error;

template <typename Fn>
llgm_status guarded(Fn&& fn) {
    try {
        fn();
        return LLGM_OK;
    } catch (const llgm::InvalidArgument& e) {
        g_last_error = e.what();
        return LLGM_ERROR_INVALID_ARGUMENT;
    } catch (const llgm::IncompatibleError& e) {
        g_last_error = e.what();
        return LLGM_ERROR_INCOMPATIBLE;
    } catch (const llgm::FormatError& e) {
        g_last_error = e.what();
        return LLGM_ERROR_FORMAT;
    } catch (const llgm::IoError& e) {
        g_last_error = e.what();
        return LLGM_ERROR_IO;
    } catch (const std::exception& e) {
        g_last_error = e.what();
        return LLGM_ERROR_INTERNAL;
    }
}

llgm_status fail_arg(const char* msg) {
    g_last_error = msg;
    return LLGM_ERROR_INVALID_ARGUMENT;
}

} // namespace

extern "C" {

const char* llgm_last_error(void) { return g_last_error.c_str(); }

void llgm_set_threads(int n) { llgm::set_thread_count(n <= 0 ? 0 : n); }

/* ---------- images ---------- */

llgm_status llgm_image_load(const char* path, llgm_image** out) {
    if (!path || !out) return fail_arg("llgm_image_load: null argument");
    return guarded([&] { *out = new llgm_image{llgm::load_image(path)}; });
}

llgm_status llgm_image_save(const llgm_image* img, const char* path) {
    if (!img || !path) return fail_arg("llgm_image_save: null argument");
    return guarded([&] { llgm::save_image(img->img, path); });
}

llgm_status llgm_image_create(int height, int width, int channels, const float* data,
                              llgm_image** out) {
    if (!out) return fail_arg("llgm_image_create: null output");
    return guarded([&] {
        if (height < 1 || width < 1 || channels < 1)
            throw llgm::InvalidArgument("llgm_image_create: non-positive shape");
        llgm::Image img(height, width, channels);
        if (data) std::copy(data, data + img.value_count(), img.data.begin());
        *out = new llgm_image{std::move(img)};
    });
}

void llgm_image_free(llgm_image* img) { delete img; }

int llgm_image_height(const llgm_image* img) { return img ? img->img.height : 0; }
int llgm_image_width(const llgm_image* img) { return img ? img->img.width : 0; }
int llgm_image_channels(const llgm_image* img) { return img ? img->img.channels : 0; }
const float* llgm_image_data(const llgm_image* img) { return img ? img->img.data.data() : nullptr; }

/* ---------- stage 1 ---------- */

void llgm_fit_options_init(llgm_fit_options* opts) {
    if (!opts) return;
    const llgm::ReconConfig def;
    opts->num_primitives = def.num_primitives;
    opts->scales = def.scales;
    opts->iterations = def.iterations;
    opts->lr = def.lr;
    opts->ssim_weight = def.ssim_weight;
    opts->seed = def.seed;
    opts->log_csv = nullptr;
}

llgm_status llgm_fit(const llgm_image* img, const llgm_fit_options* opts, llgm_model** out_model,
                     llgm_image** out_render, double* out_psnr) {
    if (!img || !opts || !out_model) return fail_arg("llgm_fit: null argument");
    return guarded([&] {
        llgm::ReconConfig cfg;
        cfg.num_primitives = opts->num_primitives;
        cfg.scales = opts->scales;
        cfg.iterations = opts->iterations;
        cfg.lr = opts->lr;
        cfg.ssim_weight = opts->ssim_weight;
        cfg.seed = opts->seed;
        if (opts->log_csv) cfg.log_csv = opts->log_csv;
        llgm::FitResult fit = llgm::fit(img->img, cfg);
        if (out_psnr) *out_psnr = fit.psnr;
        if (out_render) *out_render = new llgm_image{std::move(fit.reconstruction)};
        *out_model = new llgm_model{std::move(fit.model)};
    });
}

llgm_status llgm_model_load(const char* path, llgm_model** out) {
    if (!path || !out) return fail_arg("llgm_model_load: null argument");
    return guarded([&] { *out = new llgm_model{llgm::load_model(path)}; });
}

llgm_status llgm_model_save(const llgm_model* model, const char* path) {
    if (!model || !path) return fail_arg("llgm_model_save: null argument");
    return guarded([&] { llgm::save_model(model->model, path); });
}

void llgm_model_free(llgm_model* model) { delete model; }

int llgm_model_levels(const llgm_model* model) {
    return model ? static_cast<int>(model->model.levels.size()) : 0;
}

int llgm_model_primitives(const llgm_model* model) {
    if (!model) return 0;
    int n = 0;
    for (const llgm::GaussianSet& lvl : model->model.levels) n += lvl.count;
    return n;
}

/* ---------- dictionary ---------- */

void llgm_dict_options_init(llgm_dict_options* opts) {
    if (!opts) return;
    opts->k = 30;
    opts->order = 5;
    opts->e_targets = nullptr;
    opts->e_target_count = 0;
    opts->seed = 0;
    opts->corpus_tag = nullptr;
    opts->export_csv_dir = nullptr;
}

llgm_status llgm_dict_build(const char* const* image_paths, size_t path_count,
                            const llgm_dict_options* opts, llgm_dictionary** out,
                            double* out_inertia) {
    if (!image_paths || !opts || !out) return fail_arg("llgm_dict_build: null argument");
    return guarded([&] {
        std::vector<std::string> paths;
        paths.reserve(path_count);
        for (size_t i = 0; i < path_count; ++i) {
            if (!image_paths[i]) throw llgm::InvalidArgument("llgm_dict_build: null path entry");
            paths.emplace_back(image_paths[i]);
        }
        std::vector<double> targets{0.4, 0.5, 0.6, 0.7};
        if (opts->e_targets && opts->e_target_count > 0)
            targets.assign(opts->e_targets, opts->e_targets + opts->e_target_count);
        const std::string tag = opts->corpus_tag ? opts->corpus_tag : "";
        llgm::DictionaryBuild build =
            llgm::build_dictionary_from_paths(paths, opts->k, opts->order, targets, opts->seed, tag);
        if (opts->export_csv_dir) llgm::export_manifold_csv(build, opts->export_csv_dir);
        if (out_inertia) {
            double inertia = 0.0;
            const int order = build.dict.order;
            for (std::size_t p = 0; p < build.assignment.size(); ++p) {
                const float* x = build.coefficients.data() + p * order;
                const float* c = build.dict.atom(build.assignment[p] + 1);
                for (int d = 0; d < order; ++d) {
                    const double diff = double(x[d]) - double(c[d]);
                    inertia += diff * diff;
                }
            }
            *out_inertia = inertia;
        }
        *out = new llgm_dictionary{std::move(build.dict)};
    });
}

llgm_status llgm_dict_load(const char* path, llgm_dictionary** out) {
    if (!path || !out) return fail_arg("llgm_dict_load: null argument");
    return guarded([&] { *out = new llgm_dictionary{llgm::load_dictionary(path)}; });
}

llgm_status llgm_dict_save(const llgm_dictionary* dict, const char* path) {
    if (!dict || !path) return fail_arg("llgm_dict_save: null argument");
    return guarded([&] { llgm::save_dictionary(dict->dict, path); });
}

void llgm_dict_free(llgm_dictionary* dict) { delete dict; }

int llgm_dict_atoms(const llgm_dictionary* dict) { return dict ? dict->dict.num_atoms : 0; }
int llgm_dict_order(const llgm_dictionary* dict) { return dict ? dict->dict.order : 0; }

/* ---------- stage 2 ---------- */

void llgm_enhance_options_init(llgm_enhance_options* opts) {
    if (!opts) return;
    const llgm::EnhanceConfig def;
    opts->iterations = def.iterations;
    opts->lr = def.lr;
    opts->e_target = def.e_target;
    opts->blur_sigma = def.blur_sigma;
    opts->seed = def.seed;
    opts->log_csv = nullptr;
}

llgm_status llgm_enhance(const llgm_image* img, const llgm_model* model,
                         const llgm_dictionary* dict, const llgm_enhance_options* opts,
                         llgm_enhance_result** out) {
    if (!img || !model || !dict || !opts || !out) return fail_arg("llgm_enhance: null argument");
    return guarded([&] {
        llgm::EnhanceConfig cfg;
        cfg.iterations = opts->iterations;
        cfg.lr = opts->lr;
        cfg.e_target = opts->e_target;
        cfg.blur_sigma = opts->blur_sigma;
        cfg.seed = opts->seed;
        if (opts->log_csv) cfg.log_csv = opts->log_csv;
        *out = new llgm_enhance_result{llgm::enhance(img->img, model->model, dict->dict, cfg)};
    });
}

void llgm_enhance_result_free(llgm_enhance_result* res) { delete res; }

llgm_status llgm_enhance_result_output(const llgm_enhance_result* res, llgm_image** out) {
    if (!res || !out) return fail_arg("llgm_enhance_result_output: null argument");
    return guarded([&] { *out = new llgm_image{res->res.output}; });
}

llgm_status llgm_enhance_result_gain(const llgm_enhance_result* res, llgm_image** out) {
    if (!res || !out) return fail_arg("llgm_enhance_result_gain: null argument");
    return guarded([&] { *out = new llgm_image{res->res.gain.eta}; });
}

llgm_status llgm_enhance_result_weights(const llgm_enhance_result* res, llgm_image** out) {
    if (!res || !out) return fail_arg("llgm_enhance_result_weights: null argument");
    return guarded([&] { *out = new llgm_image{res->res.omega}; });
}

double llgm_enhance_result_final_loss(const llgm_enhance_result* res) {
    return res ? res->res.final_terms.total : 0.0;
}

double llgm_enhance_result_bias(const llgm_enhance_result* res, int channel) {
    if (!res || channel < 0 || channel > 2) return 0.0;
    return res->res.gain.bias[static_cast<std::size_t>(channel)];
}

/* ---------- metrics ---------- */

llgm_status llgm_evaluate(const llgm_image* pred, const llgm_image* ref, uint64_t seed,
                          llgm_metrics* out) {
    if (!pred || !out) return fail_arg("llgm_evaluate: null argument");
    return guarded([&] {
        const llgm::MetricsReport rep = llgm::evaluate(pred->img, ref ? &ref->img : nullptr, seed);
        out->has_psnr = rep.psnr.has_value();
        out->psnr = rep.psnr.value_or(0.0);
        out->has_ssim = rep.ssim.has_value();
        out->ssim = rep.ssim.value_or(0.0);
        out->has_loe = rep.loe.has_value();
        out->loe = rep.loe.value_or(0.0);
        out->de = rep.de;
        out->eme = rep.eme;
    });
}

/* ---------- gradient check ---------- */

llgm_status llgm_gradcheck(uint64_t seed, llgm_gradcheck_entry* entries, size_t capacity,
                           size_t* out_count, int* out_pass) {
    if (!out_count || !out_pass) return fail_arg("llgm_gradcheck: null argument");
    return guarded([&] {
        const llgm::GradcheckReport report = llgm::run_gradcheck(seed);
        *out_count = report.classes.size();
        *out_pass = report.pass ? 1 : 0;
        if (!entries) return;
        const size_t n = std::min(capacity, report.classes.size());
        for (size_t i = 0; i < n; ++i) {
            const llgm::GradcheckClass& c = report.classes[i];
            std::snprintf(entries[i].name, sizeof(entries[i].name), "%s", c.name.c_str());
            entries[i].max_error = c.max_error;
            entries[i].pass = c.pass ? 1 : 0;
        }
    });
}

} /* extern "C" */

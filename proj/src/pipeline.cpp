#include "toc/pipeline.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include "toc/checkpoint.hpp"
#include "toc/dataset.hpp"
#include "toc/image.hpp"
#include "toc/search.hpp"

namespace fs = std::filesystem;

namespace toc {

namespace {

void write_text(const std::string& path, const std::string& text) {
    std::ofstream f(path, std::ios::binary);
    check((bool)f, Error::Kind::Io, "cannot write " + path);
    f << text;
}

void write_meta(const std::string& path, const std::map<std::string, std::string>& kv) {
    std::ostringstream os;
    for (const auto& [k, v] : kv) os << k << " = " << v << '\n';
    write_text(path, os.str());
}

std::map<std::string, std::string> read_meta(const std::string& path) {
    std::ifstream f(path);
    check((bool)f, Error::Kind::Io, "cannot open " + path);
    std::map<std::string, std::string> kv;
    std::string line;
    while (std::getline(f, line)) {
        size_t eq = line.find('=');
        if (eq == std::string::npos) continue;
        auto trim = [](std::string s) {
            size_t a = s.find_first_not_of(" \t\r");
            size_t b = s.find_last_not_of(" \t\r");
            return a == std::string::npos ? std::string() : s.substr(a, b - a + 1);
        };
        kv[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
    }
    return kv;
}

struct BackboneTrain {
    int steps, batch;
    float lr;
    uint64_t seed;
};

// Plain denoising training over per-image latents; returns (first, final) loss.
std::pair<float, float> train_backbone(UNet& model, const NoiseSchedule& sched,
                                       const std::vector<Tensor>& latents,
                                       const std::vector<Tensor>* cond_latents,
                                       const BackboneTrain& bt) {
    Rng rng(bt.seed);
    ParamStore params = model.all_params();
    AdamState adam;
    adam.lr = bt.lr;
    float first = 0.0f, final_l = 0.0f;
    for (int step = 0; step < bt.steps; ++step) {
        std::vector<int> idx(bt.batch);
        for (int& i : idx) i = rng.uniform_int((int)latents.size());
        Tensor z = stack_batch(latents, idx);
        Tensor cond;
        if (cond_latents) cond = stack_batch(*cond_latents, idx);
        std::vector<int> t(bt.batch);
        for (int& v : t) v = 1 + rng.uniform_int(sched.T);
        Tensor eps = Tensor::randn(z.shape(), rng);
        Tensor loss = denoise_loss(model, sched, z, t, eps, cond_latents ? &cond : nullptr);
        float lv = loss.scalar();
        if (!std::isfinite(lv)) fail(Error::Kind::Numeric, "backbone training: non-finite loss");
        if (step == 0) first = lv;
        final_l = lv;
        params.zero_grad();
        backward(loss);
        adam_step(params, adam);
    }
    return {first, final_l};
}

const char* io_name(IoVariant v) {
    switch (v) {
        case IoVariant::V1: return "chain4";
        case IoVariant::V2: return "direct";
        case IoVariant::V3: return "chain84";
    }
    return "?";
}

}  // namespace

Pipeline::Pipeline(RunConfig cfg) : cfg_(std::move(cfg)) {
    const char* env = std::getenv("TOCF_RUN_DIR");
    dir_ = env && *env ? env : cfg_.gets("run.dir");
    fs::create_directories(dir_);
    if (fs::exists(path("config.ini"))) {
        // settings stored with the run persist; this session's explicit
        // overrides win over them
        RunConfig merged;
        merged.load_file(path("config.ini"));
        for (const auto& k : cfg_.touched()) merged.set(k, cfg_.gets(k));
        cfg_ = merged;
    }
    write_text(path("config.ini"), cfg_.resolved());
}

void Pipeline::require(const std::string& name, const std::string& producer) const {
    check(fs::exists(path(name)), Error::Kind::MissingDependency,
          name + " not found in " + dir_ + "; run `" + producer + "` first");
}

void Pipeline::provenance(const std::string& cmd, const std::vector<std::string>& inputs,
                          const std::vector<std::string>& outputs) const {
    std::ofstream f(path("provenance.txt"), std::ios::app);
    f << "cmd=" << cmd;
    for (const auto& i : inputs) f << " in:" << i << "=" << file_hash(path(i));
    for (const auto& o : outputs) f << " out:" << o << "=" << file_hash(path(o));
    f << '\n';
}

std::vector<Tensor> Pipeline::load_dataset() const {
    require("dataset.tocf", "gen-data");
    auto loaded = load_checkpoint(path("dataset.tocf"));
    std::vector<Tensor> out;
    out.reserve(loaded.size());
    for (auto& [name, t] : loaded) out.push_back(std::move(t));
    return out;
}

std::vector<Tensor> Pipeline::encode_all(const Vae& vae, const std::vector<Tensor>& images,
                                         const std::vector<int>& idx) const {
    NoGrad ng;
    std::vector<Tensor> out;
    out.reserve(idx.size());
    for (int i : idx) {
        Tensor x = reshape(images[i], {1, images[i].dim(0), images[i].dim(1), images[i].dim(2)});
        Tensor z = vae.encode_scaled(x);
        out.push_back(reshape(z, {z.dim(1), z.dim(2), z.dim(3)}));
    }
    return out;
}

void Pipeline::gen_data() {
    auto images = gen_data_images();
    std::vector<std::pair<std::string, Tensor>> named;
    char buf[32];
    for (size_t i = 0; i < images.size(); ++i) {
        std::snprintf(buf, sizeof(buf), "img%05zu", i);
        named.emplace_back(buf, images[i]);
    }
    save_checkpoint(path("dataset.tocf"), named);
    provenance("gen-data", {}, {"dataset.tocf"});
}

std::vector<Tensor> Pipeline::gen_data_images() const {
    return ::toc::gen_data(cfg_.geti("data.n"), cfg_.getu64("data.seed"), cfg_.geti("data.size"));
}

void Pipeline::train_vae(int channels) {
    check(channels == 4 || channels == 16, Error::Kind::InvalidArg,
          "train-vae: channels must be 4 or 16");
    auto images = load_dataset();
    Split split = split_dataset((int)images.size());
    std::vector<Tensor> train;
    for (int i : split.train) train.push_back(images[i]);

    VaeConfig vc;
    vc.latent_channels = channels;
    vc.spatial_factor = cfg_.geti("vae.spatial_factor");
    vc.width = 2 * cfg_.geti("vae.width");  // teacher is the 2x-width model
    vc.kl_weight = (float)cfg_.getf("vae.kl_weight");
    vc.seed = cfg_.getu64("vae.seed") + channels;
    Vae teacher(vc);

    VaeTrainConfig tc;
    tc.steps = cfg_.geti("vae.steps");
    tc.batch = cfg_.geti("vae.batch");
    tc.lr = (float)cfg_.getf("vae.lr");
    tc.seed = cfg_.getu64("vae.seed") + 100 + channels;
    VaeTrainResult r = train_vae_images(teacher, train, tc);

    std::string name = "vae" + std::to_string(channels) + "_teacher.tocf";
    save_checkpoint(path(name), teacher.all_params().params);
    write_meta(path("vae" + std::to_string(channels) + "_teacher_meta.ini"),
               {{"channels", std::to_string(channels)},
                {"width", std::to_string(vc.width)},
                {"spatial_factor", std::to_string(vc.spatial_factor)},
                {"final_loss", std::to_string(r.final_loss)},
                {"final_rec_l1", std::to_string(r.final_rec_l1)}});
    provenance("train-vae", {"dataset.tocf"}, {name});
}

VaeTrainResult Pipeline::train_vae_images(Vae& vae, const std::vector<Tensor>& images,
                                          const VaeTrainConfig& tc) const {
    return ::toc::train_vae(vae, images, tc);
}

// Global latent std over a set of images; diffusion runs on latents divided
// by this so the noising schedule sees unit-scale signal.
static float latent_std(const Vae& vae, const std::vector<Tensor>& images) {
    NoGrad ng;
    double s = 0.0, sq = 0.0;
    int64_t n = 0;
    for (const auto& img : images) {
        Tensor z = vae.encode_mean(reshape(img, {1, img.dim(0), img.dim(1), img.dim(2)}));
        for (float v : z.data()) {
            s += v;
            sq += (double)v * v;
            ++n;
        }
    }
    double mean = s / (double)n;
    return (float)std::sqrt(std::max(sq / (double)n - mean * mean, 1e-12));
}

void Pipeline::distill_vae() {
    auto images = load_dataset();
    Split split = split_dataset((int)images.size());
    std::vector<Tensor> train;
    for (int i : split.train) train.push_back(images[i]);

    bool any = false;
    for (int channels : {4, 16}) {
        std::string tname = "vae" + std::to_string(channels) + "_teacher.tocf";
        if (!fs::exists(path(tname))) continue;
        any = true;

        VaeConfig tc_cfg;
        tc_cfg.latent_channels = channels;
        tc_cfg.spatial_factor = cfg_.geti("vae.spatial_factor");
        tc_cfg.width = 2 * cfg_.geti("vae.width");
        tc_cfg.seed = cfg_.getu64("vae.seed") + channels;
        Vae teacher(tc_cfg);
        ParamStore tstore = teacher.all_params();
        load_into(path(tname), tstore);

        VaeConfig sc = tc_cfg;
        sc.width = cfg_.geti("vae.width");
        sc.lambda_lat = (float)cfg_.getf("vae.lambda_lat");
        sc.lambda_rec = (float)cfg_.getf("vae.lambda_rec");
        sc.seed = cfg_.getu64("vae.seed") + 200 + channels;
        Vae student(sc);

        VaeTrainConfig tc;
        tc.steps = cfg_.geti("vae.distill_steps");
        tc.batch = cfg_.geti("vae.batch");
        tc.lr = (float)cfg_.getf("vae.lr");
        tc.seed = cfg_.getu64("vae.seed") + 300 + channels;
        VaeTrainResult r = ::toc::distill_vae(student, teacher, train, tc);

        std::string name = "vae" + std::to_string(channels) + ".tocf";
        save_checkpoint(path(name), student.all_params().params);
        write_meta(path("vae" + std::to_string(channels) + "_meta.ini"),
                   {{"channels", std::to_string(channels)},
                    {"width", std::to_string(sc.width)},
                    {"spatial_factor", std::to_string(sc.spatial_factor)},
                    {"latent_scale", std::to_string(latent_std(student, train))},
                    {"final_loss", std::to_string(r.final_loss)},
                    {"final_lat", std::to_string(r.final_lat)}});
        provenance("distill-vae", {"dataset.tocf", tname}, {name});
    }
    check(any, Error::Kind::MissingDependency,
          "no VAE teacher checkpoints in " + dir_ + "; run `train-vae` first");
}

std::shared_ptr<Vae> Pipeline::load_vae(int channels) const {
    std::string name = "vae" + std::to_string(channels) + ".tocf";
    require(name, "distill-vae");
    VaeConfig vc;
    vc.latent_channels = channels;
    vc.spatial_factor = cfg_.geti("vae.spatial_factor");
    vc.width = cfg_.geti("vae.width");
    vc.seed = cfg_.getu64("vae.seed") + 200 + channels;
    auto vae = std::make_shared<Vae>(vc);
    ParamStore store = vae->all_params();
    load_into(path(name), store);
    auto meta = read_meta(path("vae" + std::to_string(channels) + "_meta.ini"));
    if (meta.count("latent_scale")) {
        vae->latent_scale = std::stof(meta.at("latent_scale"));
    } else {
        auto images = load_dataset();
        Split split = split_dataset((int)images.size());
        std::vector<Tensor> train;
        for (int i : split.train) train.push_back(images[i]);
        vae->latent_scale = latent_std(*vae, train);
    }
    return vae;
}

void Pipeline::train_teacher() {
    int channels = cfg_.geti("vae.channels");
    auto images = load_dataset();
    Split split = split_dataset((int)images.size());
    NoiseSchedule sched(cfg_.geti("teacher.T"));

    BackboneTrain bt{cfg_.geti("teacher.steps"), cfg_.geti("teacher.batch"),
                     (float)cfg_.getf("teacher.lr"), cfg_.getu64("teacher.seed")};

    UNetConfig uc;
    uc.latent_channels = 4;
    uc.width = cfg_.geti("teacher.width");
    uc.emb_dim = cfg_.geti("teacher.emb_dim");
    uc.io = IoVariant::V2;
    uc.seed = cfg_.getu64("teacher.seed");

    std::shared_ptr<UNet> teacher;
    IoVariant final_io = IoVariant::V2;
    std::vector<std::string> inputs{"dataset.tocf"};

    if (channels == 4) {
        auto vae4 = load_vae(4);
        inputs.push_back("vae4.tocf");
        auto lat4 = encode_all(*vae4, images, split.train);
        teacher = UNet::build(uc);
        auto [f0, f1] = train_backbone(*teacher, sched, lat4, nullptr, bt);
        write_meta(path("teacher_losses.ini"),
                   {{"pretrain_first", std::to_string(f0)}, {"pretrain_final", std::to_string(f1)}});
    } else {
        auto vae4 = load_vae(4);
        auto vae16 = load_vae(16);
        inputs.push_back("vae4.tocf");
        inputs.push_back("vae16.tocf");
        auto lat4 = encode_all(*vae4, images, split.train);
        auto lat16 = encode_all(*vae16, images, split.train);

        auto base = UNet::build(uc);
        auto [f0, f1] = train_backbone(*base, sched, lat4, nullptr, bt);

        // latent expansion: equal-budget study of the three I/O adapter
        // variants, then the winner gets the full continuation budget
        BackboneTrain abt = bt;
        abt.steps = cfg_.geti("teacher.adapter_steps");
        std::ofstream alog(path("adapter_losses.csv"));
        alog << "variant,first_loss,final_loss\n";
        float best_loss = 0.0f;
        bool have_best = false;
        for (IoVariant v : {IoVariant::V1, IoVariant::V2, IoVariant::V3}) {
            abt.seed = bt.seed + 10 + (int)v;
            auto cand = UNet::adapt_io(base, v, bt.seed + 10 + (int)v)->clone();
            auto [a0, a1] = train_backbone(*cand, sched, lat16, nullptr, abt);
            alog << io_name(v) << ',' << a0 << ',' << a1 << '\n';
            if (!have_best || a1 < best_loss) {
                best_loss = a1;
                final_io = v;
                have_best = true;
            }
        }
        alog.close();

        teacher = UNet::adapt_io(base, final_io, bt.seed + 10 + (int)final_io)->clone();
        BackboneTrain cbt = bt;
        cbt.seed = bt.seed + 10 + (int)final_io;  // same adapter stream, longer budget
        auto [e0, e1] = train_backbone(*teacher, sched, lat16, nullptr, cbt);
        write_meta(path("teacher_losses.ini"), {{"pretrain_first", std::to_string(f0)},
                                                {"pretrain_final", std::to_string(f1)},
                                                {"expand_first", std::to_string(e0)},
                                                {"expand_final", std::to_string(e1)},
                                                {"winner", io_name(final_io)}});
    }

    save_checkpoint(path("teacher.tocf"), teacher->all_params().params);
    write_meta(path("teacher_meta.ini"),
               {{"channels", std::to_string(teacher->config().latent_channels)},
                {"width", std::to_string(teacher->config().width)},
                {"emb_dim", std::to_string(teacher->config().emb_dim)},
                {"io", std::to_string((int)teacher->config().io)},
                {"T", std::to_string(sched.T)}});
    provenance("train-teacher", inputs, {"teacher.tocf"});
}

std::shared_ptr<UNet> Pipeline::load_backbone(const std::string& ckpt, const std::string& meta,
                                              bool conditioned) const {
    auto kv = read_meta(path(meta));
    UNetConfig uc;
    uc.latent_channels = std::stoi(kv.at("channels"));
    uc.width = std::stoi(kv.at("width"));
    uc.emb_dim = std::stoi(kv.at("emb_dim"));
    uc.io = (IoVariant)std::stoi(kv.at("io"));
    uc.conditioned = conditioned;
    uc.seed = 1;
    ArchVector arch;
    if (kv.count("arch")) {
        std::istringstream as(kv.at("arch"));
        std::string tok;
        while (std::getline(as, tok, '-')) arch.a.push_back(std::stoi(tok));
    } else {
        arch.a.assign(UNet::kStages, 0);
    }
    auto net = UNet::build_arch(uc, arch);
    ParamStore store = net->all_params();
    load_into(path(ckpt), store);
    return net;
}

std::shared_ptr<UNet> Pipeline::load_teacher() const {
    require("teacher.tocf", "train-teacher");
    return load_backbone("teacher.tocf", "teacher_meta.ini", false);
}

void Pipeline::capture() {
    auto teacher = load_teacher();
    int channels = teacher->config().latent_channels;
    auto vae = load_vae(channels);
    auto images = load_dataset();
    Split split = split_dataset((int)images.size());
    auto calib = encode_all(*vae, images, split.calib);
    NoiseSchedule sched(cfg_.geti("teacher.T"));

    FeatureDump dump = capture_features(*teacher, sched, calib, cfg_.getu64("calib.seed"));

    std::vector<std::pair<std::string, Tensor>> named;
    for (int i = 0; i < UNet::kStages; ++i) {
        const auto& recs = dump.stages[i];
        Tensor tvals = Tensor::zeros({(int)recs.size()});
        for (size_t j = 0; j < recs.size(); ++j) {
            std::string p = "st" + std::to_string(i) + "r" + std::to_string(j);
            named.emplace_back(p + ".in", recs[j].input);
            named.emplace_back(p + ".out", recs[j].output);
            named.emplace_back(p + ".emb", recs[j].emb);
            tvals.data()[j] = (float)recs[j].t;
        }
        named.emplace_back("st" + std::to_string(i) + ".t", tvals);
    }
    save_checkpoint(path("features.tocf"), named);
    provenance("capture", {"teacher.tocf"}, {"features.tocf"});
}

FeatureDump Pipeline::load_features() const {
    require("features.tocf", "capture");
    auto loaded = load_checkpoint(path("features.tocf"));
    std::map<std::string, Tensor> by_name;
    for (auto& [n, t] : loaded) by_name.emplace(n, std::move(t));
    FeatureDump dump;
    dump.seed = cfg_.getu64("calib.seed");
    for (int i = 0; i < UNet::kStages; ++i) {
        const Tensor& tvals = by_name.at("st" + std::to_string(i) + ".t");
        for (int j = 0; j < tvals.dim(0); ++j) {
            std::string p = "st" + std::to_string(i) + "r" + std::to_string(j);
            FeatRecord r;
            r.input = by_name.at(p + ".in");
            r.output = by_name.at(p + ".out");
            r.emb = by_name.at(p + ".emb");
            r.t = (int)tvals.data()[j];
            dump.stages[i].push_back(std::move(r));
        }
        dump.count = (int)dump.stages[i].size();
    }
    return dump;
}

void Pipeline::calibrate() {
    auto teacher = load_teacher();
    FeatureDump dump = load_features();
    CalibConfig cc;
    cc.steps = cfg_.geti("calib.steps");
    cc.batch = cfg_.geti("calib.batch");
    cc.lr = (float)cfg_.getf("calib.lr");
    cc.seed = cfg_.getu64("calib.seed");
    CalibratedStore store = calibrate_all(*teacher, dump, cc);

    std::vector<std::pair<std::string, Tensor>> named;
    std::ofstream rep(path("calib_report.csv"));
    rep << "stage,variant,init_holdout,final_holdout\n";
    for (const auto& [key, block] : store.blocks) {
        std::string p = "s" + std::to_string(key.first) + "v" + std::to_string(key.second) + ".";
        for (const auto& [n, t] : block->params().params) named.emplace_back(p + n, t);
        const auto& r = store.results.at(key);
        rep << key.first << ',' << key.second << ',' << r.init_holdout << ',' << r.final_holdout
            << '\n';
    }
    save_checkpoint(path("calibrated.tocf"), named);
    provenance("calibrate", {"teacher.tocf", "features.tocf"}, {"calibrated.tocf"});
}

std::map<std::pair<int, int>, std::shared_ptr<Block>> Pipeline::load_calibrated(
    const UNet& teacher) const {
    require("calibrated.tocf", "calibrate");
    auto loaded = load_checkpoint(path("calibrated.tocf"));
    std::map<std::pair<int, int>, std::shared_ptr<Block>> blocks;
    size_t pos = 0;
    auto specs = UNet::stage_specs(teacher.config().width);
    for (int i = 0; i < UNet::kStages; ++i) {
        const auto& s = specs[i];
        for (int v = 1; v < (int)s.library.size(); ++v) {
            auto block = std::make_shared<Block>(s.library[v], s.c_in, s.c_out,
                                                 teacher.config().emb_dim, Rng(0));
            std::string prefix = "s" + std::to_string(i) + "v" + std::to_string(v) + ".";
            for (auto& [n, t] : block->params().params) {
                check(pos < loaded.size() && loaded[pos].first == prefix + n, Error::Kind::Io,
                      "calibrated.tocf: unexpected entry order at " + prefix + n);
                check(same_shape(loaded[pos].second, t), Error::Kind::Shape,
                      "calibrated.tocf: shape mismatch at " + prefix + n);
                t.data() = loaded[pos].second.data();
                ++pos;
            }
            blocks[{i, v}] = block;
        }
    }
    check(pos == loaded.size(), Error::Kind::Io, "calibrated.tocf: trailing entries");
    return blocks;
}

void Pipeline::search(const std::vector<double>& eps_grid) {
    auto teacher = load_teacher();
    auto calibrated = load_calibrated(*teacher);
    auto vae = load_vae(teacher->config().latent_channels);
    auto images = load_dataset();
    Split split = split_dataset((int)images.size());
    auto calib_lat = encode_all(*vae, images, split.calib);
    NoiseSchedule sched(cfg_.geti("teacher.T"));

    AccTuples tuples = make_acc_tuples(*teacher, sched, calib_lat, cfg_.geti("search.n_acc"),
                                       cfg_.getu64("search.seed"));

    SearchConfig sc;
    sc.iterations = cfg_.geti("search.iterations");
    sc.init_design = cfg_.geti("search.init");
    sc.pool = cfg_.geti("search.pool");
    sc.n_acc = cfg_.geti("search.n_acc");
    sc.budget = cfg_.geti64("search.budget");
    sc.seed = cfg_.getu64("search.seed");

    auto specs = UNet::stage_specs(teacher->config().width);
    auto dims = space_dims(specs);

    std::map<ArchVector, std::pair<int64_t, double>> memo;
    EvalFn evaluate = [&](const ArchVector& a) {
        auto it = memo.find(a);
        if (it != memo.end()) return it->second;
        auto cand = UNet::assemble(teacher, calibrated, a);
        auto r = std::make_pair(UNet::param_count_for(teacher->config(), a), f_acc(*cand, tuples));
        memo.emplace(a, r);
        return r;
    };

    SweepResult sweep;
    if (eps_grid.empty()) {
        sweep = sweep_grid(sc, dims, evaluate);
    } else {
        Rng base(sc.seed);
        sweep.scale = 1.0;
        for (size_t k = 0; k < eps_grid.size(); ++k) {
            sweep.eps_grid.push_back(eps_grid[k]);
            uint64_t seed = base.split("eps" + std::to_string(k)).next_u64();
            sweep.runs.push_back(run_bo(eps_grid[k], sc, dims, evaluate, seed));
        }
    }

    write_search_history(path("search_history.csv"), sweep);
    write_tradeoff(path("tradeoff.csv"), sweep);

    std::vector<EvalRecord> bests;
    for (const auto& run : sweep.runs)
        if (run.any_feasible) bests.push_back(run.best);
    check(!bests.empty(), Error::Kind::State, "search: no feasible architecture in any run");
    EvalRecord sel = select_by_budget(bests, sc.budget);
    write_meta(path("selected.ini"), {{"arch", sel.a.str()},
                                      {"f_param", std::to_string(sel.f_param)},
                                      {"f_acc", std::to_string(sel.f_acc)},
                                      {"scale", std::to_string(sweep.scale)}});
    provenance("search", {"teacher.tocf", "calibrated.tocf"},
               {"search_history.csv", "tradeoff.csv", "selected.ini"});
}

void Pipeline::finetune() {
    auto teacher = load_teacher();
    auto calibrated = load_calibrated(*teacher);
    require("selected.ini", "search");
    auto sel = read_meta(path("selected.ini"));
    ArchVector arch;
    {
        std::istringstream as(sel.at("arch"));
        std::string tok;
        while (std::getline(as, tok, '-')) arch.a.push_back(std::stoi(tok));
    }
    auto vae = load_vae(teacher->config().latent_channels);
    auto images = load_dataset();
    Split split = split_dataset((int)images.size());
    auto latents = encode_all(*vae, images, split.train);
    NoiseSchedule sched(cfg_.geti("teacher.T"));

    auto student = UNet::assemble(teacher, calibrated, arch)->clone();
    BackboneTrain bt{cfg_.geti("finetune.steps"), cfg_.geti("finetune.batch"),
                     (float)cfg_.getf("finetune.lr"), cfg_.getu64("finetune.seed")};
    auto [f0, f1] = train_backbone(*student, sched, latents, nullptr, bt);

    save_checkpoint(path("student_backbone.tocf"), student->all_params().params);
    write_meta(path("student_meta.ini"),
               {{"channels", std::to_string(student->config().latent_channels)},
                {"width", std::to_string(student->config().width)},
                {"emb_dim", std::to_string(student->config().emb_dim)},
                {"io", std::to_string((int)student->config().io)},
                {"arch", arch.str()},
                {"first_loss", std::to_string(f0)},
                {"final_loss", std::to_string(f1)}});
    provenance("finetune", {"teacher.tocf", "calibrated.tocf", "selected.ini"},
               {"student_backbone.tocf"});
}

void Pipeline::train_sr() {
    require("student_backbone.tocf", "finetune");
    auto backbone = load_backbone("student_backbone.tocf", "student_meta.ini", false);
    auto vae = load_vae(backbone->config().latent_channels);
    auto images = load_dataset();
    Split split = split_dataset((int)images.size());
    std::vector<Tensor> hr;
    for (int i : split.train) hr.push_back(images[i]);
    NoiseSchedule sched(cfg_.geti("teacher.T"));

    auto model = UNet::widen_conditioning(backbone, cfg_.getu64("sr.seed"));
    SrTrainConfig tc;
    tc.steps = cfg_.geti("sr.steps");
    tc.batch = cfg_.geti("sr.batch");
    tc.lr = (float)cfg_.getf("sr.lr");
    tc.scale = cfg_.geti("sr.scale");
    tc.seed = cfg_.getu64("sr.seed");
    TrainCurve curve = ::toc::train_sr(*model, *vae, sched, hr, tc);

    save_checkpoint(path("sr_teacher.tocf"), model->all_params().params);
    auto meta = read_meta(path("student_meta.ini"));
    write_meta(path("sr_teacher_meta.ini"),
               {{"channels", meta.at("channels")},
                {"width", meta.at("width")},
                {"emb_dim", meta.at("emb_dim")},
                {"io", meta.at("io")},
                {"arch", meta.at("arch")},
                {"scale", std::to_string(tc.scale)},
                {"first_loss", std::to_string(curve.first_loss)},
                {"final_loss", std::to_string(curve.final_loss)}});
    provenance("train-sr", {"student_backbone.tocf", "dataset.tocf"}, {"sr_teacher.tocf"});
}

void Pipeline::distill_sr() {
    require("sr_teacher.tocf", "train-sr");
    auto teacher = load_backbone("sr_teacher.tocf", "sr_teacher_meta.ini", true);
    auto vae = load_vae(teacher->config().latent_channels);
    auto images = load_dataset();
    Split split = split_dataset((int)images.size());
    std::vector<Tensor> hr;
    for (int i : split.train) hr.push_back(images[i]);
    NoiseSchedule sched(cfg_.geti("teacher.T"));
    int scale = cfg_.geti("sr.scale");

    auto student = teacher->clone();
    DistillConfig dc;
    dc.steps = cfg_.geti("distill.steps");
    dc.batch = cfg_.geti("distill.batch");
    dc.lr = (float)cfg_.getf("distill.lr");
    dc.k_teacher = cfg_.geti("sr.k_teacher");
    dc.scale = scale;
    dc.seed = cfg_.getu64("distill.seed");
    TrainCurve curve = distill_one_step(*student, *teacher, *vae, sched, hr, dc);

    save_checkpoint(path("sr_student.tocf"), student->all_params().params);
    auto meta = read_meta(path("sr_teacher_meta.ini"));
    meta["first_loss"] = std::to_string(curve.first_loss);
    meta["final_loss"] = std::to_string(curve.final_loss);
    write_meta(path("sr_student_meta.ini"), meta);

    // held-out metrics for the report
    std::ofstream csv(path("metrics.csv"));
    csv << "image_id,psnr_bicubic,psnr_teacher,psnr_student,ssim_bicubic,ssim_teacher,"
           "ssim_student\n";
    int n_eval = std::min<int>(16, (int)split.calib.size());
    for (int j = 0; j < n_eval; ++j) {
        int id = split.calib[j];
        Tensor x = reshape(images[id], {1, 3, images[id].dim(1), images[id].dim(2)});
        Tensor x_l = ::toc::degrade(x, scale);
        Tensor bic = ::toc::upsample(x_l, scale);
        Tensor xt = k_step_infer(*teacher, *vae, sched, x_l, scale, dc.k_teacher,
                                 cfg_.getu64("distill.seed") + id);
        Tensor xs = one_step_infer(*student, *vae, sched, x_l, scale,
                                   cfg_.getu64("distill.seed") + id);
        csv << id << ',' << psnr(bic, x) << ',' << psnr(xt, x) << ',' << psnr(xs, x) << ','
            << ssim(bic, x) << ',' << ssim(xt, x) << ',' << ssim(xs, x) << '\n';
    }
    csv.close();
    provenance("distill-sr", {"sr_teacher.tocf", "dataset.tocf"},
               {"sr_student.tocf", "metrics.csv"});
}

void Pipeline::infer(const std::string& in_path, const std::string& out_path) {
    require("sr_student.tocf", "distill-sr");
    auto gen = load_backbone("sr_student.tocf", "sr_student_meta.ini", true);
    auto vae = load_vae(gen->config().latent_channels);
    NoiseSchedule sched(cfg_.geti("teacher.T"));
    int scale = cfg_.geti("sr.scale");

    Tensor img = read_ppm(in_path);
    Tensor x_l = reshape(img, {1, 3, img.dim(1), img.dim(2)});
    Tensor out = one_step_infer(*gen, *vae, sched, x_l, scale, cfg_.getu64("run.master_seed"));
    write_ppm(out_path, reshape(out, {3, out.dim(2), out.dim(3)}));
}

std::string Pipeline::report() {
    std::ostringstream os;
    os << "run directory: " << dir_ << "\n\n";

    auto dump_csv = [&](const std::string& name, const std::string& title) {
        if (!fs::exists(path(name))) {
            os << title << ": (not generated)\n\n";
            return;
        }
        os << title << "\n";
        std::ifstream f(path(name));
        std::string line;
        while (std::getline(f, line)) {
            for (auto& ch : line)
                if (ch == ',') ch = '\t';
            os << "  " << line << "\n";
        }
        os << "\n";
    };
    dump_csv("adapter_losses.csv", "I/O adapter study (equal budget)");
    dump_csv("tradeoff.csv", "compression-fidelity trade-off");
    dump_csv("metrics.csv", "held-out SR metrics");
    if (fs::exists(path("selected.ini"))) {
        os << "selected architecture\n";
        std::ifstream f(path("selected.ini"));
        std::string line;
        while (std::getline(f, line)) os << "  " << line << "\n";
        os << "\n";
    }
    std::string text = os.str();
    write_text(path("report.txt"), text);
    return text;
}

int Pipeline::selftest() {
    // cheap invariants over the core numerics; deep checks live in the suite
    NoiseSchedule sched(40);
    check(std::fabs(sched.ab(0) - 1.0f) < 1e-6f, Error::Kind::Numeric, "selftest: ab(0) != 1");
    for (int t = 1; t <= sched.T; ++t)
        check(sched.ab(t) < sched.ab(t - 1), Error::Kind::Numeric,
              "selftest: alpha_bar not decreasing");

    UNetConfig uc;
    uc.latent_channels = 4;
    uc.width = 8;
    uc.seed = 5;
    auto net = UNet::build(uc);
    Rng rng(3);
    Tensor z = Tensor::randn({2, 4, 8, 8}, rng);
    Tensor out = net->forward(z, {1, 7});
    check(same_shape(out, z), Error::Kind::Shape,
          "selftest: backbone must preserve latent shape");
    check(net->param_count() == UNet::param_count_for(uc, net->arch()), Error::Kind::Numeric,
          "selftest: analytic parameter count mismatch");

    // checkpoint round-trip through a temp file
    std::string tmp = path("selftest_tmp.tocf");
    auto params = net->all_params();
    save_checkpoint(tmp, params.params);
    auto loaded = load_checkpoint(tmp);
    check(loaded.size() == params.params.size(), Error::Kind::Io, "selftest: round-trip count");
    for (size_t i = 0; i < loaded.size(); ++i)
        for (int64_t j = 0; j < loaded[i].second.numel(); ++j)
            check(loaded[i].second.data()[j] == params.params[i].second.data()[j],
                  Error::Kind::Io, "selftest: round-trip not bit-exact");
    fs::remove(tmp);

    // gp interpolation at the jitter floor
    std::vector<std::vector<double>> X{{0.0}, {0.4}, {0.9}};
    std::vector<double> y{1.0, -0.5, 2.0};
    GpModel gp = GpModel::fit(X, y);
    for (size_t i = 0; i < X.size(); ++i) {
        auto [m, v] = gp.predict(X[i]);
        check(std::fabs(m - y[i]) < 1e-5, Error::Kind::Numeric, "selftest: gp interpolation");
    }
    return 0;
}

}  // namespace toc

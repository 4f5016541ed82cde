#pragma once

#include <memory>
#include <string>
#include <vector>

#include "toc/calibrate.hpp"
#include "toc/config.hpp"
#include "toc/sr.hpp"

namespace toc {

// Stage orchestrator over a run directory. Each command loads its
// prerequisites from disk (erroring with the producing command's name if
// missing), writes its artifacts, and appends a provenance record.
class Pipeline {
public:
    explicit Pipeline(RunConfig cfg);

    const std::string& dir() const { return dir_; }
    const RunConfig& config() const { return cfg_; }

    void gen_data();
    void train_vae(int channels);
    void distill_vae();
    void train_teacher();
    void capture();
    void calibrate();
    // eps_grid empty -> auto-scaled default grid
    void search(const std::vector<double>& eps_grid);
    void finetune();
    void train_sr();
    void distill_sr();
    void infer(const std::string& in_path, const std::string& out_path);
    std::string report();
    int selftest();

private:
    RunConfig cfg_;
    std::string dir_;

    std::string path(const std::string& name) const { return dir_ + "/" + name; }
    void require(const std::string& name, const std::string& producer) const;
    void provenance(const std::string& cmd, const std::vector<std::string>& inputs,
                    const std::vector<std::string>& outputs) const;

    std::vector<Tensor> gen_data_images() const;
    VaeTrainResult train_vae_images(Vae& vae, const std::vector<Tensor>& images,
                                    const VaeTrainConfig& tc) const;
    std::vector<Tensor> load_dataset() const;
    FeatureDump load_features() const;
    std::map<std::pair<int, int>, std::shared_ptr<Block>> load_calibrated(
        const UNet& teacher) const;
    std::shared_ptr<Vae> load_vae(int channels) const;
    std::shared_ptr<UNet> load_teacher() const;
    std::shared_ptr<UNet> load_backbone(const std::string& ckpt, const std::string& meta,
                                        bool conditioned) const;
    std::vector<Tensor> encode_all(const Vae& vae, const std::vector<Tensor>& images,
                                   const std::vector<int>& idx) const;
};

}  // namespace toc

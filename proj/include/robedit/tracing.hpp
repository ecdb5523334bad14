#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "robedit/checker.hpp"
#include "robedit/model.hpp"

namespace robedit {

struct TraceConfig {
    int pert_copies = 5;        // B
    int samples_per_prompt = 10;  // s
    float temperature = 0.2f;
    uint64_t seed = 0;
    int max_new_tokens = 16;

    void validate() const;
};

struct PromptPair {
    std::vector<int> ori;
    std::vector<int> pert;
};

struct LayerSweepResult {
    double acc_ori = 0.0;
    double acc_pert = 0.0;
    std::vector<double> acc_patched;  // index 0 = layer 1
    std::vector<double> ri;
    std::vector<double> discrepancy;
};

struct KeyLayerReport {
    int key_layer = 0;
    double max_ri = 0.0;
    bool tie_broken = false;
    LayerSweepResult sweep;
};

// pass@1 estimate over samples_per_prompt seeded completions.
double prompt_accuracy(const ModelBundle& model, const std::vector<int>& prompt, const Checker& checker,
                       const TraceConfig& cfg);

// (acc_patched - acc_pert) / (acc_ori - acc_pert); not clamped.
double restoration_improvement(double acc_patched, double acc_ori, double acc_pert);

// Layer-wise intervention sweep: patch every perturbed copy with the
// original prompt's layer-l states at the right-aligned overlap positions
// and score the pooled completions. `force` skips the robustness-gap
// guard (test hook).
LayerSweepResult layer_sweep(const ModelBundle& model, const PromptPair& pair, const Checker& checker,
                             const TraceConfig& cfg, bool force = false, int threads = 1);

// argmax of ri; ties within 1e-9 broken by max discrepancy, then by the
// smallest layer index.
KeyLayerReport select_key_layer(const LayerSweepResult& sweep);

std::string sweep_to_json(const LayerSweepResult& sweep, int indent = -1);
std::string report_to_json(const KeyLayerReport& report, int indent = -1);
KeyLayerReport report_from_json(const std::string& text);

}  // namespace robedit

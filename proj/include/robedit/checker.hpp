#pragma once

#include <memory>
#include <string>
#include <vector>

#include "robedit/model.hpp"

namespace robedit {

// Decides whether one generated completion counts as a pass.
class Checker {
public:
    virtual ~Checker() = default;
    virtual bool passes(const std::vector<int>& completion) const = 0;
};

// Pass = exact token match against a frozen reference (by convention the
// unedited model's greedy continuation of the original prompt).
class ReferenceMatchChecker : public Checker {
public:
    explicit ReferenceMatchChecker(std::vector<int> reference);
    bool passes(const std::vector<int>& completion) const override;
    const std::vector<int>& reference() const { return reference_; }

private:
    std::vector<int> reference_;
};

// Pass = child process exits 0. The completion is detokenized and written
// to the child's stdin as UTF-8; exceeding the timeout is a fail.
class ExternalCommandChecker : public Checker {
public:
    ExternalCommandChecker(std::vector<std::string> argv, double timeout_s, ModelConfig cfg);
    bool passes(const std::vector<int>& completion) const override;

private:
    std::vector<std::string> argv_;
    double timeout_s_;
    ModelConfig cfg_;
};

struct CheckerSpec {
    enum class Type { reference_match, external_command };
    Type type = Type::reference_match;
    std::vector<int> reference;      // empty until resolved
    std::vector<std::string> argv;   // external_command only
    double timeout_s = 10.0;

    bool resolved() const { return type == Type::external_command || !reference.empty(); }
};

// Fills an unresolved reference_match spec with the model's greedy
// continuation of the prompt.
void resolve_reference(CheckerSpec& spec, const ModelBundle& model, const std::vector<int>& prompt_tokens,
                       int max_new_tokens);

std::unique_ptr<Checker> make_checker(const CheckerSpec& spec, const ModelConfig& cfg);

// Runs argv with `input` on stdin; returns the exit status, or -1 on
// timeout. Spawn failures throw CheckerError.
int run_subprocess(const std::vector<std::string>& argv, const std::string& input, double timeout_s);

}  // namespace robedit

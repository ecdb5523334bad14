#include "robedit/checker.hpp"

#include <fcntl.h>
#include <poll.h>
#include <signal.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cerrno>
#include <chrono>
#include <cstring>
#include <thread>

#include "robedit/errors.hpp"

namespace robedit {

ReferenceMatchChecker::ReferenceMatchChecker(std::vector<int> reference) : reference_(std::move(reference)) {
    if (reference_.empty()) {
        throw CheckerError("reference_match checker requires a non-empty resolved reference");
    }
}

bool ReferenceMatchChecker::passes(const std::vector<int>& completion) const {
    return completion == reference_;
}

ExternalCommandChecker::ExternalCommandChecker(std::vector<std::string> argv, double timeout_s, ModelConfig cfg)
    : argv_(std::move(argv)), timeout_s_(timeout_s), cfg_(std::move(cfg)) {
    if (argv_.empty()) {
        throw CheckerError("external_command checker requires a non-empty argv");
    }
}

bool ExternalCommandChecker::passes(const std::vector<int>& completion) const {
    return run_subprocess(argv_, detokenize(completion, cfg_), timeout_s_) == 0;
}

int run_subprocess(const std::vector<std::string>& argv, const std::string& input, double timeout_s) {
    int in_pipe[2];
    if (pipe(in_pipe) != 0) {
        throw CheckerError(std::string("pipe failed: ") + std::strerror(errno));
    }
    const pid_t pid = fork();
    if (pid < 0) {
        close(in_pipe[0]);
        close(in_pipe[1]);
        throw CheckerError(std::string("fork failed: ") + std::strerror(errno));
    }
    if (pid == 0) {
        dup2(in_pipe[0], STDIN_FILENO);
        close(in_pipe[0]);
        close(in_pipe[1]);
        std::vector<char*> args;
        args.reserve(argv.size() + 1);
        for (const std::string& a : argv) {
            args.push_back(const_cast<char*>(a.c_str()));
        }
        args.push_back(nullptr);
        execvp(args[0], args.data());
        _exit(127);
    }
    close(in_pipe[0]);
    // Best-effort write; the child may exit without reading (SIGPIPE ignored).
    signal(SIGPIPE, SIG_IGN);
    size_t written = 0;
    while (written < input.size()) {
        const ssize_t n = write(in_pipe[1], input.data() + written, input.size() - written);
        if (n <= 0) {
            break;
        }
        written += static_cast<size_t>(n);
    }
    close(in_pipe[1]);

    const auto deadline = std::chrono::steady_clock::now() + std::chrono::duration<double>(timeout_s);
    int status = 0;
    while (true) {
        const pid_t r = waitpid(pid, &status, WNOHANG);
        if (r == pid) {
            break;
        }
        if (r < 0) {
            throw CheckerError(std::string("waitpid failed: ") + std::strerror(errno));
        }
        if (std::chrono::steady_clock::now() >= deadline) {
            kill(pid, SIGKILL);
            waitpid(pid, &status, 0);
            return -1;
        }
        std::this_thread::sleep_for(std::chrono::milliseconds(2));
    }
    if (WIFEXITED(status)) {
        const int code = WEXITSTATUS(status);
        if (code == 127) {
            throw CheckerError("checker command could not be executed: " + argv[0]);
        }
        return code;
    }
    return -1;
}

void resolve_reference(CheckerSpec& spec, const ModelBundle& model, const std::vector<int>& prompt_tokens,
                       int max_new_tokens) {
    if (spec.type != CheckerSpec::Type::reference_match || spec.resolved()) {
        return;
    }
    GenerationParams params;
    params.max_new_tokens = max_new_tokens;
    params.temperature = 0.0f;
    params.seed = 0;
    params.n_samples = 1;
    auto outs = generate(model, prompt_tokens, params);
    if (outs[0].empty()) {
        throw CheckerError("greedy reference continuation is empty (model emitted eos immediately)");
    }
    spec.reference = std::move(outs[0]);
}

std::unique_ptr<Checker> make_checker(const CheckerSpec& spec, const ModelConfig& cfg) {
    switch (spec.type) {
        case CheckerSpec::Type::reference_match:
            return std::make_unique<ReferenceMatchChecker>(spec.reference);
        case CheckerSpec::Type::external_command:
            return std::make_unique<ExternalCommandChecker>(spec.argv, spec.timeout_s, cfg);
    }
    throw CheckerError("unknown checker type");
}

}  // namespace robedit

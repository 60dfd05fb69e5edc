// cdcm_sim: command-line front end for the link model.

#include "cdcm/error.hpp"
#include "cdcm/scenario.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <atomic>
#include <iostream>
#include <optional>
#include <sstream>
#include <thread>

namespace {

enum Exit { Ok = 0, Failure = 1, CheckFailed = 2 };

using Runner = cdcm::CommandResult (*)(const std::filesystem::path&, const cdcm::RunOptions&);

struct Outcome {
    bool error = false;
    std::string message;
    cdcm::CommandResult result;
};

int run_files(Runner run, const std::vector<std::string>& files, const cdcm::RunOptions& opt, unsigned jobs,
              bool check)
{
    std::vector<Outcome> outcomes(files.size());
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t i = next++; i < files.size(); i = next++) {
            try {
                outcomes[i].result = run(files[i], opt);
            } catch (const std::exception& e) {
                outcomes[i].error = true;
                outcomes[i].message = e.what();
            }
        }
    };
    jobs = std::clamp<unsigned>(jobs, 1, static_cast<unsigned>(files.size()));
    std::vector<std::thread> pool;
    for (unsigned j = 1; j < jobs; ++j)
        pool.emplace_back(worker);
    worker();
    for (auto& t : pool)
        t.join();

    int code = Ok;
    for (std::size_t i = 0; i < files.size(); ++i) {
        const Outcome& o = outcomes[i];
        if (o.error) {
            std::cerr << "error: " << o.message << '\n';
            code = Failure;
            continue;
        }
        for (const auto& f : o.result.files)
            std::cout << (opt.out_dir / f).string() << '\n';
        for (const auto& c : o.result.failed_checks)
            std::cerr << files[i] << ": check failed: " << c << '\n';
        if (check && !o.result.failed_checks.empty() && code == Ok)
            code = CheckFailed;
    }
    return code;
}

}  // namespace

int main(int argc, char** argv)
{
    CLI::App app{"CDCM link simulator"};
    app.require_subcommand(1);

    cdcm::RunOptions opt;
    std::optional<std::uint64_t> seed;
    double resolution_fs = 0.0;
    std::string out_dir = ".";
    unsigned jobs = 1;
    bool check = false;

    auto add_common = [&](CLI::App* sub) {
        sub->add_option("--seed", seed, "Override the scenario seed");
        sub->add_option("--resolution-fs", resolution_fs, "Time resolution in femtoseconds")
            ->check(CLI::PositiveNumber);
        sub->add_option("--out", out_dir, "Output directory");
        sub->add_option("--jobs", jobs, "Scenario files run in parallel")->check(CLI::Range(1u, 256u));
        sub->add_flag("--check", check, "Exit with status 2 when an expect entry fails");
    };

    unsigned n_max = 20;
    auto* eff = app.add_subcommand("efficiency", "Maximum efficiency table as CSV on stdout");
    eff->add_option("n_max", n_max, "Largest slot count")->check(CLI::Range(3u, 64u));

    std::string scheme;
    bool negative = false;
    auto* vec = app.add_subcommand("vectors", "Codebook conformance vectors as CSV on stdout");
    vec->add_option("scheme", scheme, "Scheme name, e.g. CDCM-3-1, CDCM-4-1.5, unary-6-2")->required();
    vec->add_flag("--negative", negative, "Negative polarity");

    std::vector<std::string> files;
    auto* rt = app.add_subcommand("roundtrip", "Link scenarios: BER and recovered clock, or duty sweeps");
    auto* topo = app.add_subcommand("topology", "Fanout network scenarios");
    auto* eye = app.add_subcommand("eye", "Eye diagram scenarios");
    for (auto* sub : {rt, topo, eye}) {
        sub->add_option("files", files, "Scenario JSON files")->required()->check(CLI::ExistingFile);
        add_common(sub);
    }

    CLI11_PARSE(app, argc, argv);

    opt.seed = seed;
    if (resolution_fs > 0.0)
        opt.resolution_fs = resolution_fs;
    opt.out_dir = out_dir;

    try {
        if (*eff) {
            cdcm::cmd_efficiency(std::cout, n_max);
            return Ok;
        }
        if (*vec) {
            cdcm::cmd_vectors(std::cout, scheme, negative);
            return Ok;
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return Failure;
    }
    if (*rt)
        return run_files(cdcm::cmd_roundtrip, files, opt, jobs, check);
    if (*topo)
        return run_files(cdcm::cmd_topology, files, opt, jobs, check);
    return run_files(cdcm::cmd_eye, files, opt, jobs, check);
}

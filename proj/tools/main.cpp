#include <fstream>
#include <iostream>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "hpcserve/hpcserve.hpp"

using namespace hpcserve;

namespace {

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw validation_error("cannot read " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::vector<std::string> split_list(const std::string& csv) {
    std::vector<std::string> out;
    std::istringstream in(csv);
    std::string item;
    while (std::getline(in, item, ',')) {
        if (item.empty()) throw validation_error("empty entry in list: " + csv);
        out.push_back(item);
    }
    if (out.empty()) throw validation_error("empty list");
    return out;
}

// "1,2,4" or "1..256" or a mix: "1,2,8..12"
std::vector<int> parse_levels(const std::string& spec) {
    std::vector<int> levels;
    for (const std::string& item : split_list(spec)) {
        std::size_t dots = item.find("..");
        std::string lo = dots == std::string::npos ? item : item.substr(0, dots);
        std::string hi = dots == std::string::npos ? item : item.substr(dots + 2);
        if (lo.empty() || hi.empty() ||
            lo.find_first_not_of("0123456789") != std::string::npos ||
            hi.find_first_not_of("0123456789") != std::string::npos)
            throw validation_error("bad level: " + item);
        int a = std::stoi(lo), b = std::stoi(hi);
        if (a > b) throw validation_error("descending range: " + item);
        for (int c = a; c <= b; ++c) levels.push_back(c);
    }
    return levels;
}

struct ScriptArgs {
    std::string model;
    std::string engine = "tgi";
    int replicas = 1;
    std::string template_path;
};

int cmd_script_render(const ScriptArgs& a) {
    ModelProfile p = find_profile(a.model);
    EngineKind engine = parse_engine(a.engine);
    if (!a.template_path.empty()) {
        std::cout << substitute_placeholders(read_file(a.template_path),
                                             template_values(p, engine));
        return 0;
    }
    std::cout << render_script(make_script(p, engine, a.replicas));
    return 0;
}

struct LbconfArgs {
    std::string hosts_path;
    std::string model;
    int port = 8080;
};

int cmd_lbconf_gen(const LbconfArgs& a) {
    HostsFile hosts = parse_hosts(read_file(a.hosts_path));
    std::vector<Endpoint> ready;
    for (const Endpoint& ep : hosts.endpoints)
        if (ep.status == EndpointStatus::Ready && (a.model.empty() || ep.model == a.model))
            ready.push_back(ep);
    std::cout << generate_nginx_conf(ready, a.port);
    return 0;
}

struct SimulateArgs {
    std::string scenario_path;
    std::string cluster_path;
    double lambda = 0.0;
};

int cmd_cluster_simulate(const SimulateArgs& a) {
    Cluster cluster =
        a.cluster_path.empty() ? default_cluster() : load_cluster(read_file(a.cluster_path));
    Scheduler sched(std::move(cluster), SchedulerConfig{a.lambda});
    auto log = run_scenario(sched, parse_scenario(read_file(a.scenario_path)));
    for (const Transition& t : log) std::cout << format_transition(t) << "\n";

    int completed = 0, failed = 0, cancelled = 0;
    for (const Job& j : sched.query_all()) {
        completed += j.state == JobState::Completed;
        failed += j.state == JobState::Failed;
        cancelled += j.state == JobState::Cancelled;
    }
    std::cerr << "jobs: " << sched.query_all().size() << " (completed " << completed
              << ", failed " << failed << ", cancelled " << cancelled << "), final clock "
              << sched.now() << " ms\n";
    return 0;
}

struct SweepArgs {
    std::string models;
    std::string levels = "1..256";
    int prompt_tokens = 1024;
    std::string out_path;
};

int cmd_bench_sweep(const SweepArgs& a) {
    SweepConfig cfg;
    cfg.models = split_list(a.models);
    cfg.levels = parse_levels(a.levels);
    cfg.prompt_tokens = a.prompt_tokens;
    auto points = run_sweep(cfg);
    std::string csv = to_csv(points);
    std::cout << csv;
    if (!a.out_path.empty()) write_csv(points, a.out_path);
    return 0;
}

struct SaturationArgs {
    std::string models;
    int max_level = 256;
};

int cmd_bench_saturation(const SaturationArgs& a) {
    if (a.max_level < 2) throw validation_error("--max-level must be >= 2");
    for (const std::string& model : split_list(a.models)) {
        SweepConfig cfg;
        cfg.models = {model};
        cfg.levels.resize((std::size_t)a.max_level);
        std::iota(cfg.levels.begin(), cfg.levels.end(), 1);
        auto points = run_sweep(cfg);
        if (points.empty()) continue;  // uncalibrated, already warned
        std::cout << points[0].model << " " << detect_saturation(points) << "\n";
    }
    return 0;
}

struct ServeArgs {
    int port = 8080;
    std::string cluster_path;
    std::size_t queue_cap = 1024;
    std::string strategy = "rr";
    int max_batch = 256;
    bool realtime = false;
};

int cmd_gateway_serve(const ServeArgs& a) {
    if (a.port < 1 || a.port > 65535) throw validation_error("--port must be in 1..65535");
    OrchestratorConfig cfg;
    cfg.queue_cap = a.queue_cap;
    cfg.strategy = parse_strategy(a.strategy);
    cfg.max_batch = a.max_batch;
    Cluster cluster =
        a.cluster_path.empty() ? default_cluster() : load_cluster(read_file(a.cluster_path));
    Orchestrator orch(std::move(cluster), cfg);
    GatewayServer server(orch, a.realtime);
    std::cerr << "serving on 0.0.0.0:" << a.port << " (virtual clock"
              << (a.realtime ? ", realtime replay" : "") << ")\n";
    if (!server.listen("0.0.0.0", a.port)) throw error("cannot bind port " + std::to_string(a.port));
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"LLM serving orchestration over a simulated GPU cluster"};
    app.require_subcommand(1);

    ScriptArgs script_args;
    CLI::App* script = app.add_subcommand("script", "Batch script tooling");
    script->require_subcommand(1);
    CLI::App* render = script->add_subcommand("render", "Render a job script for a model");
    render->add_option("--model", script_args.model, "Model name or alias")->required();
    render->add_option("--engine", script_args.engine, "Engine: tgi, vllm, or mock");
    render->add_option("--replicas", script_args.replicas, "Engines per job")
        ->check(CLI::PositiveNumber);
    render->add_option("--template", script_args.template_path,
                       "Template file with ${PLACEHOLDER} substitution");

    LbconfArgs lbconf_args;
    CLI::App* lbconf = app.add_subcommand("lbconf", "Reverse-proxy config tooling");
    lbconf->require_subcommand(1);
    CLI::App* gen = lbconf->add_subcommand("gen", "Generate a proxy config from a hosts file");
    gen->add_option("--hosts", lbconf_args.hosts_path, "Hosts file path")->required();
    gen->add_option("--model", lbconf_args.model, "Only pool this model's endpoints");
    gen->add_option("--port", lbconf_args.port, "Front listen port");

    SimulateArgs sim_args;
    CLI::App* cluster = app.add_subcommand("cluster", "Cluster simulation");
    cluster->require_subcommand(1);
    CLI::App* simulate = cluster->add_subcommand("simulate", "Replay a scheduler scenario file");
    simulate->add_option("scenario", sim_args.scenario_path, "Scenario file")->required();
    simulate->add_option("--cluster", sim_args.cluster_path, "Cluster config file");
    simulate->add_option("--lambda", sim_args.lambda, "Size penalty for job priority");

    SweepArgs sweep_args;
    SaturationArgs sat_args;
    CLI::App* bench = app.add_subcommand("bench", "Performance curves");
    bench->require_subcommand(1);
    CLI::App* sweep = bench->add_subcommand("sweep", "Latency/throughput curve as CSV");
    sweep->add_option("--models", sweep_args.models, "Comma-separated models")->required();
    sweep->add_option("--levels", sweep_args.levels, "Concurrency levels, e.g. 1,2,4 or 1..256");
    sweep->add_option("--prompt-tokens", sweep_args.prompt_tokens, "Tokens per request")
        ->check(CLI::PositiveNumber);
    sweep->add_option("--out", sweep_args.out_path, "Also write the CSV here");
    CLI::App* saturation = bench->add_subcommand("saturation", "Detected saturation per model");
    saturation->add_option("--models", sat_args.models, "Comma-separated models")->required();
    saturation->add_option("--max-level", sat_args.max_level, "Sweep concurrency 1..N");

    ServeArgs serve_args;
    CLI::App* gateway = app.add_subcommand("gateway", "REST gateway");
    gateway->require_subcommand(1);
    CLI::App* serve = gateway->add_subcommand("serve", "Serve the orchestrator over HTTP");
    serve->add_option("--port", serve_args.port, "Listen port")->envname("HPCSERVE_PORT");
    serve->add_option("--cluster", serve_args.cluster_path, "Cluster config file")
        ->envname("HPCSERVE_CLUSTER");
    serve->add_option("--queue-cap", serve_args.queue_cap, "Per-model queue capacity, 0 disables")
        ->envname("HPCSERVE_QUEUE_CAP");
    serve->add_option("--lb-strategy", serve_args.strategy, "rr or lc");
    serve->add_option("--max-batch", serve_args.max_batch, "Largest accepted batch")
        ->check(CLI::PositiveNumber);
    serve->add_flag("--realtime", serve_args.realtime, "Sleep out virtual latencies");

    render->callback([&] { cmd_script_render(script_args); });
    gen->callback([&] { cmd_lbconf_gen(lbconf_args); });
    simulate->callback([&] { cmd_cluster_simulate(sim_args); });
    sweep->callback([&] { cmd_bench_sweep(sweep_args); });
    saturation->callback([&] { cmd_bench_saturation(sat_args); });
    serve->callback([&] { cmd_gateway_serve(serve_args); });

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int rc = app.exit(e);
        return rc == 0 ? 0 : 1;
    } catch (const validation_error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const parse_error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const not_found_error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const infeasible_error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const unsupported_error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const duplicate_error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 0;
}

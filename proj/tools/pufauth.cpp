// pufauth command-line front end.
#include <pthread.h>

#include <chrono>
#include <cmath>
#include <csignal>
#include <random>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "pufauth/bloom.hpp"
#include "pufauth/crypto.hpp"
#include "pufauth/errors.hpp"
#include "pufauth/harness.hpp"
#include "pufauth/protocol.hpp"

namespace fs = std::filesystem;
using namespace pufauth;

namespace {

void log_line(const std::string& s) { std::cerr << s << std::endl; }

fs::path run_dir(const fs::path& root, const harness::ExperimentConfig& cfg) {
    return root / harness::config_hash(cfg);
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p);
    if (!in) throw FormatError("cannot open " + p.string());
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

void spit(const fs::path& p, const std::string& s) {
    if (p.has_parent_path()) fs::create_directories(p.parent_path());
    std::ofstream out(p);
    if (!out) throw FormatError("cannot write " + p.string());
    out << s;
}

const char* reason_name(wire::Reason r) {
    switch (r) {
        case wire::Reason::ok: return "ok";
        case wire::Reason::replay: return "replay";
        case wire::Reason::decrypt_fail: return "decrypt_fail";
        case wire::Reason::identity_mismatch: return "identity_mismatch";
        case wire::Reason::low_confidence: return "low_confidence";
    }
    return "?";
}

void print_response(const wire::AuthResponse& r) {
    std::printf("verdict=%s reason=%s p_open=%.6f predicted=%d\n",
                r.verdict == wire::Verdict::accept ? "accept" : "reject", reason_name(r.reason), r.p_open.value_or(-1.0),
                r.predicted);
}

void print_filter(const BloomFilter& f) {
    const double fill = double(f.popcount()) / double(f.bit_count());
    std::printf("m=%llu bits (%zu bytes) k=%u inserted=%llu fill=%.6f est_fpr=%.3g\n",
                static_cast<unsigned long long>(f.bit_count()), f.memory_bytes(), f.hash_count(),
                static_cast<unsigned long long>(f.inserted()), fill, std::pow(fill, double(f.hash_count())));
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"PUF image authentication: simulation, training, evaluation and the auth server"};
    app.require_subcommand(1);

    std::string config_path;
    std::string runs_root = "runs";
    auto add_config = [&](CLI::App* sub) {
        sub->add_option("-c,--config", config_path, "experiment config (JSON)")->required()->check(CLI::ExistingFile);
        sub->add_option("--runs", runs_root, "root directory for run outputs");
    };

    auto* simulate = app.add_subcommand("simulate", "generate the fleets and dump enrollment images");
    add_config(simulate);

    auto* train = app.add_subcommand("train", "train one model and provision the fleet");
    add_config(train);

    auto* eval = app.add_subcommand("eval", "full multi-seed experiment with report");
    add_config(eval);

    auto* ablate = app.add_subcommand("ablate", "re-run the experiment along one axis");
    add_config(ablate);
    std::string axis;
    std::vector<double> values;
    ablate->add_option("--axis", axis, "image_size | n_d | device_count")->required();
    ablate->add_option("--values", values, "axis values (default: the config's ablation.values)");

    auto* report = app.add_subcommand("report", "print the table of a finished run");
    std::string report_dir;
    report->add_option("--run", report_dir, "run directory")->required()->check(CLI::ExistingDirectory);

    auto* serve = app.add_subcommand("serve", "run the authentication server");
    std::string model_path, filter_path, listen = "127.0.0.1:7700", key_path;
    std::uint64_t capacity = 1000000;
    double fpr = 1e-4;
    bool insert_after_accept = false;
    int snapshot_ms = 5000;
    serve->add_option("--model", model_path, "model manifest")->required()->check(CLI::ExistingFile);
    serve->add_option("--filter", filter_path, "replay filter snapshot (created if missing)")->required();
    serve->add_option("--listen", listen, "host:port");
    serve->add_option("--key", key_path, "server private key PEM (default: next to the model)");
    serve->add_option("--capacity", capacity, "filter design capacity for a new filter");
    serve->add_option("--fpr", fpr, "filter design false-positive rate for a new filter");
    serve->add_option("--snapshot-ms", snapshot_ms, "filter snapshot period");
    serve->add_flag("--insert-after-accept", insert_after_accept, "only remember accepted requests");

    auto* device = app.add_subcommand("device", "act as a provisioned device");
    std::string provision_path, target;
    bool replay = false, impostor = false;
    int count = 1;
    device->add_option("--provision", provision_path, "provisioning file")->required()->check(CLI::ExistingFile);
    device->add_option("--target", target, "server host:port")->required();
    device->add_option("--count", count, "number of fresh requests");
    device->add_flag("--replay", replay, "resend each request a second time");
    device->add_flag("--impostor", impostor, "claim the identity with a different physical device");

    auto* filter = app.add_subcommand("filter", "inspect or manage a replay filter snapshot");
    filter->require_subcommand(1);
    std::string f_path, f_out;
    auto* f_stats = filter->add_subcommand("stats", "print filter parameters and fill");
    f_stats->add_option("--filter", f_path)->required()->check(CLI::ExistingFile);
    auto* f_snap = filter->add_subcommand("snapshot", "copy a filter to a new snapshot file");
    f_snap->add_option("--filter", f_path)->required()->check(CLI::ExistingFile);
    f_snap->add_option("--out", f_out)->required();
    auto* f_restore = filter->add_subcommand("restore", "install a snapshot as the live filter file");
    f_restore->add_option("--from", f_out)->required()->check(CLI::ExistingFile);
    f_restore->add_option("--filter", f_path)->required();
    auto* f_create = filter->add_subcommand("create", "create an empty filter sized for n and p");
    f_create->add_option("--filter", f_path)->required();
    f_create->add_option("--capacity", capacity);
    f_create->add_option("--fpr", fpr);

    CLI11_PARSE(app, argc, argv);

    try {
        if (simulate->parsed()) {
            const auto cfg = harness::load_config(config_path);
            const auto dir = run_dir(runs_root, cfg);
            const auto seed = harness::experiment_seeds(cfg).front();
            const auto data = harness::build_datasets(cfg, seed);
            write_fleet_file(dir / "fleet.json", {cfg.master_seed, data.legit_devices});
            write_fleet_file(dir / "impostors.json", {cfg.master_seed, data.impostor_devices});
            std::size_t n = 0;
            auto dump = [&](const std::vector<Sample>& items, const char* split) {
                for (std::size_t i = 0; i < items.size(); ++i) {
                    const auto p = dir / "images" / split / std::to_string(items[i].device_id) /
                                   (std::to_string(i) + ".pufi");
                    write_image_file(p, items[i].image);
                    ++n;
                }
            };
            dump(data.train.items, "train");
            dump(data.val.items, "val");
            dump(data.test.items, "test");
            dump(data.val_impostor, "val_impostor");
            dump(data.test_impostor, "test_impostor");
            spit(dir / "config.json", harness::to_json(cfg).dump(2) + "\n");
            std::printf("%zu images, %zu devices, %zu impostors -> %s\n", n, data.legit_devices.size(),
                        data.impostor_devices.size(), dir.c_str());
        } else if (train->parsed()) {
            const auto cfg = harness::load_config(config_path);
            const auto dir = run_dir(runs_root, cfg);
            const auto seed = harness::experiment_seeds(cfg).front();
            auto trained = harness::run_seed(cfg, seed, log_line);
            save_manifest(dir / "model.pufm", trained.model);
            const auto sk = crypto::RsaOaepPrivateKey::generate(2048);
            spit(dir / "server_key.pem", sk->to_pem());
            fs::permissions(dir / "server_key.pem", fs::perms::owner_read | fs::perms::owner_write,
                            fs::perm_options::replace);
            const std::string pk_pem = sk->public_key()->to_pem();
            for (const auto& d : trained.data.legit_devices)
                write_provisioning(dir / "provision" / (std::to_string(d.id) + ".json"),
                                   {d, pk_pem, cfg.image_width, cfg.image_height});
            spit(dir / "config.json", harness::to_json(cfg).dump(2) + "\n");
            std::printf("model -> %s (tau %.6f, test FAR %.4f FRR %.4f)\n", (dir / "model.pufm").c_str(),
                        trained.model.tau, trained.result.test.far, trained.result.test.frr);
        } else if (eval->parsed() || ablate->parsed()) {
            auto cfg = harness::load_config(config_path);
            const auto dir = run_dir(runs_root, cfg);
            std::vector<harness::ExperimentResult> results;
            harness::AblationAxis ax = harness::AblationAxis::none;
            if (eval->parsed()) {
                results.push_back(harness::run_experiment(cfg, log_line));
            } else {
                ax = harness::parse_axis(axis);
                results = harness::run_ablation(cfg, ax, values.empty() ? cfg.ablation_values : values, log_line);
            }
            const auto out = eval->parsed() ? dir : dir / ("ablation_" + axis);
            harness::emit_report(results, ax, harness::measure_wire_overhead(cfg.image_width, cfg.image_height), out);
            std::cout << slurp(out / "table.txt");
            std::printf("report -> %s\n", out.c_str());
        } else if (report->parsed()) {
            std::cout << slurp(fs::path(report_dir) / "table.txt");
        } else if (serve->parsed()) {
            sigset_t sigs;
            sigemptyset(&sigs);
            sigaddset(&sigs, SIGINT);
            sigaddset(&sigs, SIGTERM);
            pthread_sigmask(SIG_BLOCK, &sigs, nullptr);

            OpenSetModel model = load_manifest(model_path);
            if (key_path.empty()) key_path = (fs::path(model_path).parent_path() / "server_key.pem").string();
            auto sk = crypto::RsaOaepPrivateKey::from_pem(slurp(key_path));
            BloomFilter bf = fs::exists(filter_path) ? BloomFilter::load(filter_path)
                                                     : BloomFilter::for_capacity(capacity, fpr);
            ServerState state(std::move(sk), std::move(bf), std::move(model));
            state.filter_capacity = capacity;
            state.insert_policy =
                insert_after_accept ? ReplayInsertPolicy::after_accept : ReplayInsertPolicy::after_decrypt;
            state.log = log_line;
            const auto [host, port] = parse_endpoint(listen);
            ServerOptions opts;
            opts.host = host;
            opts.port = port;
            opts.snapshot_path = filter_path;
            opts.snapshot_interval = std::chrono::milliseconds(snapshot_ms);
            AuthServer server(state, opts);
            server.start();
            log_line("listening on " + host + ":" + std::to_string(server.port()));
            int sig = 0;
            sigwait(&sigs, &sig);
            log_line("shutting down");
            server.stop();
            log_line("handled " + std::to_string(server.requests_handled()) + " requests");
        } else if (device->parsed()) {
            const auto prov = read_provisioning(provision_path);
            DeviceSpec spec = prov.device;
            if (impostor) spec.seed = derive_seed(spec.seed, 0x1a9057e5ULL);  // different silicon, same claim
            Device dev(spec);
            dev.reseed_evaluations(static_cast<std::uint64_t>(std::random_device{}()));
            const auto pk = crypto::RsaOaepPublicKey::from_pem(prov.public_key_pem);
            const crypto::Aes256Gcm aead;
            const auto [host, port] = parse_endpoint(target);
            AuthClient client(host, port);
            for (int i = 0; i < count; ++i) {
                const auto t0 = std::chrono::steady_clock::now();
                const auto req = build_auth_request(dev, *pk, aead, prov.image_width, prov.image_height);
                const auto resp = client.send(req);
                const double ms =
                    std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
                print_response(resp);
                std::printf("round trip %.1f ms, request %zu bytes\n", ms, wire::encode_request(req).size() + 4);
                if (replay) {
                    std::printf("replay: ");
                    print_response(client.send(req));
                }
            }
        } else if (filter->parsed()) {
            if (f_stats->parsed()) {
                print_filter(BloomFilter::load(f_path));
            } else if (f_snap->parsed()) {
                BloomFilter::load(f_path).save(f_out);
            } else if (f_restore->parsed()) {
                BloomFilter::load(f_out).save(f_path);
            } else if (f_create->parsed()) {
                const auto bf = BloomFilter::for_capacity(capacity, fpr);
                bf.save(f_path);
                print_filter(bf);
            }
        }
    } catch (const Error& e) {
        std::fprintf(stderr, "error (%s): %s\n", e.kind(), e.what());
        return 2;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 0;
}

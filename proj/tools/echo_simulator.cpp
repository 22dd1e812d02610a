// Test simulator: reads one request line and answers with theta padded with zeros to --dim.
#include <json.hpp>

#include <chrono>
#include <cstdlib>
#include <iostream>
#include <string>
#include <thread>

int main(int argc, char** argv) {
    std::size_t dim = 0;
    bool malformed = false;
    bool report_error = false;
    bool wrong_id = false;
    double sleep_seconds = 0.0;
    int exit_code = 0;
    for (int i = 1; i < argc; ++i) {
        const std::string a = argv[i];
        if (a == "--dim" && i + 1 < argc) dim = std::stoul(argv[++i]);
        else if (a == "--malformed") malformed = true;
        else if (a == "--error") report_error = true;
        else if (a == "--wrong-id") wrong_id = true;
        else if (a == "--sleep" && i + 1 < argc) sleep_seconds = std::stod(argv[++i]);
        else if (a == "--exit-code" && i + 1 < argc) exit_code = std::stoi(argv[++i]);
        else {
            std::cerr << "echo_simulator: unknown argument " << a << '\n';
            return 64;
        }
    }
    std::string line;
    if (!std::getline(std::cin, line)) return 65;
    const auto req = nlohmann::json::parse(line, nullptr, false);
    if (req.is_discarded() || !req.contains("id") || !req.contains("theta")) return 65;
    if (sleep_seconds > 0) std::this_thread::sleep_for(std::chrono::duration<double>(sleep_seconds));

    if (malformed) {
        std::cout << "{\"id\": " << req["id"].dump() << ", \"eta\": [1, 2" << std::endl;
        return exit_code;
    }
    nlohmann::json resp;
    resp["id"] = wrong_id ? req["id"].get<long long>() + 1 : req["id"].get<long long>();
    if (report_error) {
        resp["error"] = "requested failure";
    } else {
        std::vector<double> eta = req["theta"].get<std::vector<double>>();
        if (eta.size() < dim) eta.resize(dim, 0.0);
        resp["eta"] = eta;
    }
    std::cout << resp.dump() << std::endl;
    return exit_code;
}

// Serves the line-delimited gradient protocol on stdio with the toy encoder.
// Stands in for the model sidecar in tests of the external-encoder path.

#include <iostream>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "cultprobe/error.hpp"
#include "cultprobe/ontology.hpp"
#include "cultprobe/prompt_optimizer.hpp"
#include "cultprobe/util.hpp"

using namespace cultprobe;
using json = nlohmann::json;

int main(int argc, char** argv) {
    CLI::App app{"Toy gradient server"};
    std::string vocab_file;
    std::size_t d_tok = 16, d_out = 32;
    std::uint64_t seed = 7;
    app.add_option("--vocab", vocab_file, "Vocabulary JSON (default: the toy vocabulary)");
    app.add_option("--token-dim", d_tok);
    app.add_option("--output-dim", d_out);
    app.add_option("--toy-seed", seed);
    CLI11_PARSE(app, argc, argv);

    try {
        const TokenVocabulary vocab = vocab_file.empty() ? toy_vocabulary(load_ontology(), d_tok, seed) : parse_vocabulary_json(read_file(vocab_file));
        ToyEncoder encoder(vocab.dim(), d_out, seed);
        std::string line;
        while (std::getline(std::cin, line)) {
            json reply;
            try {
                const json req = json::parse(line);
                const auto ids = req.at("token_ids").get<std::vector<int>>();
                const auto upstream = req.at("upstream_vector").get<std::vector<double>>();
                if (upstream.size() != d_out) throw Error("upstream_vector has " + std::to_string(upstream.size()) + " entries, expected " + std::to_string(d_out));
                const auto out = encoder.embed_and_gradient(ids, token_rows(vocab, ids), upstream);
                reply["embedding"] = out.embedding;
                json grads = json::array();
                for (std::size_t r = 0; r < out.row_gradients.rows(); ++r) {
                    const auto g = out.row_gradients.row(r);
                    grads.push_back(std::vector<double>(g.begin(), g.end()));
                }
                reply["per_row_gradients"] = std::move(grads);
            } catch (const std::exception& e) {
                reply = json{{"error", e.what()}};
            }
            std::cout << reply.dump() << '\n' << std::flush;
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}

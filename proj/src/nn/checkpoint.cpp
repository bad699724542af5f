#include "json.hpp"
#include "msp/detail/bytes.hpp"
#include "msp/error.hpp"
#include "msp/nn.hpp"

namespace msp::nn {

namespace {

constexpr char kMagic[4] = {'M', 'C', 'A', 'E'};
constexpr std::uint32_t kVersion = 1;

nlohmann::json layer_table(const Autoencoder<float>& model) {
    auto table = nlohmann::json::array();
    for (std::size_t i = 0; i < model.num_layers(); ++i) {
        const auto& l = model.layer(i);
        if (l.weight.empty()) continue;
        table.push_back({{"index", i}, {"kind", to_string(l.kind())}, {"weight", l.weight_shape()}, {"bias", {l.bias.size()}}});
    }
    return table;
}

std::size_t payload_floats(Autoencoder<float>& model) {
    std::size_t n = 0;
    model.for_each_parameter([&](Buffer<float>& w, Buffer<float>&) { n += w.size(); });
    return n;
}

}  // namespace

std::vector<std::uint8_t> encode_checkpoint(const Autoencoder<float>& model, const TrainState* state) {
    // for_each_parameter is non-const only because it hands out gradients too
    auto& m = const_cast<Autoencoder<float>&>(model);

    nlohmann::json h;
    h["config"] = nlohmann::json::parse(model.config().to_json());
    h["layers"] = layer_table(model);
    h["iteration"] = model.iteration;
    h["weight_count"] = payload_floats(m);
    h["optimizer"] = state != nullptr;
    if (state) {
        const auto p = state->optimizer.params();
        h["adam"] = {{"step", state->optimizer.steps()}, {"beta1", p.beta1}, {"beta2", p.beta2}, {"eps", p.eps}};
        h["schedule"] = {{"lr", state->lr},
                         {"epoch", state->epoch},
                         {"previous", state->schedule.previous},
                         {"has_previous", state->schedule.has_previous},
                         {"bad_epochs", state->schedule.bad_epochs},
                         {"min_delta", state->schedule.min_delta},
                         {"patience", state->schedule.patience},
                         {"factor", state->schedule.factor}};
    }
    const std::string header = h.dump();

    detail::ByteWriter out;
    out.raw(kMagic, 4);
    out.u32(kVersion);
    out.u32(static_cast<std::uint32_t>(header.size()));
    out.str(header);
    m.for_each_parameter([&](Buffer<float>& w, Buffer<float>&) { out.raw(w.data(), w.size() * sizeof(float)); });
    if (state) {
        auto& opt = const_cast<Adam&>(state->optimizer);
        for (auto* moments : {&opt.first_moments(), &opt.second_moments()}) {
            for (const auto& a : *moments) out.raw(a.data(), a.size() * sizeof(float));
        }
    }
    return std::move(out.bytes());
}

void save_model(const Autoencoder<float>& model, const std::filesystem::path& path, const TrainState* state) {
    detail::write_file(path, encode_checkpoint(model, state));
}

Checkpoint decode_checkpoint(const std::vector<std::uint8_t>& bytes) {
    detail::ByteReader in(bytes);
    if (in.str(4, "magic") != std::string(kMagic, 4)) throw FormatError("bad magic: expected 'MCAE'", 0);
    const auto version = in.u32("version");
    if (version != kVersion) {
        throw FormatError("unsupported checkpoint version " + std::to_string(version) + " (expected 1)", 4);
    }
    const auto header_len = in.u32("header length");
    const auto header_at = static_cast<std::int64_t>(in.offset());
    nlohmann::json h;
    try {
        h = nlohmann::json::parse(in.str(header_len, "header"));
    } catch (const nlohmann::json::parse_error& e) {
        throw FormatError(std::string("checkpoint header is not JSON: ") + e.what(), header_at);
    }

    std::optional<Autoencoder<float>> built;
    try {
        built.emplace(AutoencoderConfig::from_json(h.at("config").dump()));
    } catch (const ParameterError& e) {
        throw FormatError(std::string("checkpoint config invalid: ") + e.what(), header_at);
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("checkpoint header incomplete: ") + e.what(), header_at);
    }
    Autoencoder<float>& model = *built;
    const auto expected = layer_table(model);
    if (!h.contains("layers") || h["layers"] != expected) {
        throw FormatError("layer shape table does not match the declared config: header has " +
                              (h.contains("layers") ? h["layers"].dump() : std::string("none")) + ", config implies " +
                              expected.dump(),
                          header_at);
    }
    const bool has_opt = h.value("optimizer", false);
    const std::size_t floats = payload_floats(model);
    const std::size_t want = floats * sizeof(float) * (has_opt ? 3 : 1);
    if (in.remaining() != want) {
        throw FormatError("weight payload is " + std::to_string(in.remaining()) + " bytes, expected " + std::to_string(want),
                          static_cast<std::int64_t>(in.offset()));
    }
    model.for_each_parameter([&](Buffer<float>& w, Buffer<float>&) { in.raw(w.data(), w.size() * sizeof(float), "weights"); });
    model.iteration = h.value("iteration", std::uint64_t{0});

    Checkpoint ck{std::move(model), std::nullopt};
    if (has_opt) {
        std::vector<std::vector<float>> moments[2];
        for (auto& set : moments) {
            ck.model.for_each_parameter([&](Buffer<float>& w, Buffer<float>&) {
                std::vector<float> a(w.size());
                in.raw(a.data(), a.size() * sizeof(float), "adam moments");
                set.push_back(std::move(a));
            });
        }
        try {
            const auto& a = h.at("adam");
            const auto& s = h.at("schedule");
            TrainState st{Adam(AdamParams{a.at("beta1"), a.at("beta2"), a.at("eps")}), PlateauSchedule{}, s.at("lr"),
                          s.at("epoch")};
            st.optimizer.restore(a.at("step"), std::move(moments[0]), std::move(moments[1]));
            st.schedule.previous = s.at("previous");
            st.schedule.has_previous = s.at("has_previous");
            st.schedule.bad_epochs = s.at("bad_epochs");
            st.schedule.min_delta = s.at("min_delta");
            st.schedule.patience = s.at("patience");
            st.schedule.factor = s.at("factor");
            ck.state = std::move(st);
        } catch (const nlohmann::json::exception& e) {
            throw FormatError(std::string("checkpoint optimizer state incomplete: ") + e.what(), header_at);
        }
    }
    return ck;
}

Checkpoint load_model(const std::filesystem::path& path) { return decode_checkpoint(detail::read_file(path)); }

}  // namespace msp::nn

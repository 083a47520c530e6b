#include "smforge/io.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <system_error>

#include <zlib.h>

namespace smforge::io {
namespace {

constexpr char kSmMagic[8] = {'S', 'M', 'F', 'O', 'R', 'G', 'E', '\0'};
constexpr char kCkMagic[8] = {'S', 'M', 'F', 'C', 'K', 'P', 'T', '\0'};

static_assert(std::endian::native == std::endian::little,
              "binary containers assume a little-endian host");

void put_u32(std::string& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xffu));
}

std::uint32_t get_u32(std::string_view in, std::size_t at) {
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) {
        v |= static_cast<std::uint32_t>(static_cast<unsigned char>(in[at + i])) << (8 * i);
    }
    return v;
}

void put_f32(std::string& out, double v) {
    const float f = static_cast<float>(v);
    char b[4];
    std::memcpy(b, &f, 4);
    out.append(b, 4);
}

float get_f32(std::string_view in, std::size_t at) {
    float f;
    std::memcpy(&f, in.data() + at, 4);
    return f;
}

std::string wrap(const char (&magic)[8], const nlohmann::json& header, const std::string& payload) {
    const std::string h = header.dump();
    std::string out(magic, 8);
    put_u32(out, kFormatVersion);
    put_u32(out, static_cast<std::uint32_t>(h.size()));
    out += h;
    out += payload;
    return out;
}

struct Unwrapped {
    nlohmann::json header;
    std::string_view payload;
};

Unwrapped unwrap(const char (&magic)[8], std::string_view bytes, std::string_view what) {
    if (bytes.size() < 16 || std::memcmp(bytes.data(), magic, 8) != 0) {
        throw FormatError(std::string(what) + ": bad magic or file too short");
    }
    const std::uint32_t version = get_u32(bytes, 8);
    if (version != kFormatVersion) {
        throw FormatError(std::string(what) + ": unsupported format version " +
                          std::to_string(version));
    }
    const std::uint32_t hlen = get_u32(bytes, 12);
    if (bytes.size() < 16 + static_cast<std::size_t>(hlen)) {
        throw FormatError(std::string(what) + ": truncated header");
    }
    Unwrapped u;
    try {
        u.header = nlohmann::json::parse(bytes.substr(16, hlen));
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string(what) + ": malformed header: " + e.what());
    }
    u.payload = bytes.substr(16 + hlen);
    if (u.header.value("format_version", 0u) != kFormatVersion) {
        throw FormatError(std::string(what) + ": header format_version mismatch");
    }
    return u;
}

void check_payload(const nlohmann::json& header, std::string_view payload, std::size_t expected,
                   std::string_view what) {
    if (payload.size() < expected) {
        throw FormatError(std::string(what) + ": truncated payload (" +
                          std::to_string(payload.size()) + " of " + std::to_string(expected) +
                          " bytes)");
    }
    if (payload.size() > expected) {
        throw FormatError(std::string(what) + ": payload longer than the header declares");
    }
    if (header.at("payload_crc32").get<std::uint32_t>() != crc32(payload)) {
        throw FormatError(std::string(what) + ": payload checksum mismatch");
    }
}

nlohmann::json freq_to_json(const FreqDescriptor& f) {
    return {{"index", f.index},
            {"freq_hz", f.freq_hz},
            {"channel", f.channel == Channel::x ? "x" : "y"},
            {"mix_m", f.mix_m},
            {"mix_n", f.mix_n}};
}

FreqDescriptor freq_from_json(const nlohmann::json& j) {
    FreqDescriptor f;
    f.index = j.at("index").get<int>();
    f.freq_hz = j.at("freq_hz").get<double>();
    const std::string ch = j.at("channel").get<std::string>();
    if (ch != "x" && ch != "y") throw FormatError("unknown receive channel '" + ch + "'");
    f.channel = ch == "x" ? Channel::x : Channel::y;
    f.mix_m = j.at("mix_m").get<int>();
    f.mix_n = j.at("mix_n").get<int>();
    return f;
}

}  // namespace

std::uint32_t crc32(std::string_view bytes) {
    uLong c = ::crc32(0L, Z_NULL, 0);
    c = ::crc32(c, reinterpret_cast<const Bytef*>(bytes.data()), static_cast<uInt>(bytes.size()));
    return static_cast<std::uint32_t>(c);
}

std::string read_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError("cannot open '" + path.string() + "' for reading");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void atomic_write(const fs::path& path, std::string_view bytes) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    fs::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw FormatError("cannot open '" + tmp.string() + "' for writing");
        out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
        if (!out) throw FormatError("write to '" + tmp.string() + "' failed");
    }
    fs::rename(tmp, path);
}

std::string encode_sm(const SystemMatrix& sm) {
    std::string payload;
    payload.reserve(static_cast<std::size_t>(sm.data().size()) * 8);
    for (Eigen::Index i = 0; i < sm.data().size(); ++i) {
        put_f32(payload, sm.data().data()[i].real());
        put_f32(payload, sm.data().data()[i].imag());
    }
    nlohmann::json freqs = nlohmann::json::array();
    for (const auto& f : sm.freqs()) freqs.push_back(freq_to_json(f));
    const Grid& g = sm.grid();
    nlohmann::json header = {
        {"kind", "system_matrix"},
        {"format_version", kFormatVersion},
        {"endianness", "little"},
        {"dtype", "complex64"},
        {"rows", sm.rows()},
        {"grid", {{"nx", g.nx}, {"ny", g.ny}, {"fov_x", g.fov_x}, {"fov_y", g.fov_y}}},
        {"freqs", freqs},
        {"payload_crc32", crc32(payload)},
    };
    if (sm.row_snr()) header["row_snr"] = *sm.row_snr();
    return wrap(kSmMagic, header, payload);
}

SystemMatrix decode_sm(std::string_view bytes) {
    const Unwrapped u = unwrap(kSmMagic, bytes, "system matrix");
    const nlohmann::json& h = u.header;
    try {
        if (h.at("kind") != "system_matrix" || h.at("dtype") != "complex64" ||
            h.at("endianness") != "little") {
            throw FormatError("system matrix: unsupported kind, dtype or endianness");
        }
        const auto& gj = h.at("grid");
        const Grid grid(gj.at("nx").get<int>(), gj.at("ny").get<int>(), gj.at("fov_x").get<double>(),
                        gj.at("fov_y").get<double>());
        const int rows = h.at("rows").get<int>();
        if (rows < 0) throw FormatError("system matrix: negative row count");
        std::vector<FreqDescriptor> freqs;
        for (const auto& f : h.at("freqs")) freqs.push_back(freq_from_json(f));
        const std::size_t n = static_cast<std::size_t>(rows) * static_cast<std::size_t>(grid.size());
        check_payload(h, u.payload, n * 8, "system matrix");
        CMatrix data(rows, grid.size());
        for (std::size_t i = 0; i < n; ++i) {
            data.data()[i] = cplx(get_f32(u.payload, 8 * i), get_f32(u.payload, 8 * i + 4));
        }
        std::optional<std::vector<double>> snr;
        if (h.contains("row_snr")) snr = h.at("row_snr").get<std::vector<double>>();
        return SystemMatrix(grid, std::move(freqs), std::move(data), std::move(snr));
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("system matrix: bad header field: ") + e.what());
    }
}

void save_sm(const fs::path& path, const SystemMatrix& sm) { atomic_write(path, encode_sm(sm)); }

SystemMatrix load_sm(const fs::path& path) { return decode_sm(read_file(path)); }

std::uint32_t sm_payload_crc(const fs::path& path) {
    const std::string bytes = read_file(path);
    return unwrap(kSmMagic, bytes, "system matrix").header.at("payload_crc32").get<std::uint32_t>();
}

std::string encode_checkpoint(const Checkpoint& ck) {
    ck.params.check_shapes(ck.model);
    std::string payload;
    nlohmann::json tensors = nlohmann::json::array();
    for (const auto& [name, t] : ck.params.tensors) {
        tensors.push_back({{"name", name}, {"rows", t.rows()}, {"cols", t.cols()}});
        for (Eigen::Index i = 0; i < t.size(); ++i) put_f32(payload, t.data()[i]);
    }
    const nlohmann::json header = {
        {"kind", "checkpoint"},
        {"format_version", kFormatVersion},
        {"endianness", "little"},
        {"dtype", "float32"},
        {"config", {{"model", ck.model.to_json()}, {"train", ck.train}}},
        {"iteration", ck.iteration},
        {"seed", ck.seed},
        {"training_inputs", ck.training_inputs},
        {"tensors", tensors},
        {"payload_crc32", crc32(payload)},
    };
    return wrap(kCkMagic, header, payload);
}

Checkpoint decode_checkpoint(std::string_view bytes) {
    const Unwrapped u = unwrap(kCkMagic, bytes, "checkpoint");
    const nlohmann::json& h = u.header;
    try {
        Checkpoint ck;
        ck.model = model::ModelConfig::from_json(h.at("config").at("model"));
        ck.train = h.at("config").at("train");
        ck.iteration = h.at("iteration").get<int>();
        ck.seed = h.at("seed").get<std::uint64_t>();
        ck.training_inputs = h.at("training_inputs").get<std::vector<std::uint32_t>>();
        std::size_t total = 0;
        for (const auto& t : h.at("tensors")) {
            total += t.at("rows").get<std::size_t>() * t.at("cols").get<std::size_t>();
        }
        check_payload(h, u.payload, total * 4, "checkpoint");
        std::size_t at = 0;
        for (const auto& t : h.at("tensors")) {
            RMatrix m(t.at("rows").get<int>(), t.at("cols").get<int>());
            for (Eigen::Index i = 0; i < m.size(); ++i, at += 4) m.data()[i] = get_f32(u.payload, at);
            ck.params.tensors.emplace(t.at("name").get<std::string>(), std::move(m));
        }
        ck.params.check_shapes(ck.model);
        if (!ck.params.all_finite()) throw InvalidDataError("checkpoint holds non-finite parameters");
        return ck;
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("checkpoint: bad header field: ") + e.what());
    }
}

void save_checkpoint(const fs::path& path, const Checkpoint& ck) {
    atomic_write(path, encode_checkpoint(ck));
}

Checkpoint load_checkpoint(const fs::path& path) { return decode_checkpoint(read_file(path)); }

std::string encode_pgm(const RMatrix& img) {
    const double peak = img.size() > 0 ? img.cwiseAbs().maxCoeff() : 0.0;
    std::string out = "P5\n" + std::to_string(img.cols()) + " " + std::to_string(img.rows()) + "\n255\n";
    for (Eigen::Index i = 0; i < img.size(); ++i) {
        const double v = peak > 0.0 ? std::abs(img.data()[i]) / peak : 0.0;
        out.push_back(static_cast<char>(static_cast<unsigned char>(std::lround(v * 255.0))));
    }
    return out;
}

std::string encode_csv(const RMatrix& img) {
    std::ostringstream ss;
    ss << std::setprecision(17);
    for (Eigen::Index r = 0; r < img.rows(); ++r) {
        for (Eigen::Index c = 0; c < img.cols(); ++c) {
            if (c > 0) ss << ',';
            ss << img(r, c);
        }
        ss << '\n';
    }
    return ss.str();
}

std::string loss_curve_csv(const train::TrainReport& report) {
    std::ostringstream ss;
    ss << std::setprecision(10) << "iteration,train_loss,val_nrmse\n";
    std::size_t v = 0;
    for (std::size_t i = 0; i < report.train_loss.size(); ++i) {
        const int it = static_cast<int>(i) + 1;
        ss << it << ',' << report.train_loss[i] << ',';
        if (v < report.val_iterations.size() && report.val_iterations[v] == it) {
            ss << report.val_nrmse[v++];
        }
        ss << '\n';
    }
    return ss.str();
}

void apply_override(nlohmann::json& root, std::string_view assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string_view::npos || eq == 0) {
        throw ConfigError("override '" + std::string(assignment) + "' is not of the form key=value");
    }
    const std::string key(assignment.substr(0, eq));
    const std::string raw(assignment.substr(eq + 1));
    nlohmann::json* node = &root;
    std::size_t start = 0;
    for (;;) {
        const auto dot = key.find('.', start);
        const std::string part = key.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
        if (!node->is_object() || !node->contains(part)) {
            throw ConfigError("unknown configuration key '" + key + "'");
        }
        node = &(*node)[part];
        if (dot == std::string::npos) break;
        start = dot + 1;
    }
    nlohmann::json value;
    try {
        value = nlohmann::json::parse(raw);
    } catch (const nlohmann::json::exception&) {
        value = raw;
    }
    if (node->is_object() && !value.is_object()) {
        throw ConfigError("configuration key '" + key + "' is a section, not a value");
    }
    *node = value;
}

}  // namespace smforge::io

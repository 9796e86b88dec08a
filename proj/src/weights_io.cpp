#include "reefgrad/weights_io.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>

namespace reefgrad {

namespace {

constexpr char kMagic[4] = {'R', 'N', 'W', 'T'};
constexpr std::uint32_t kVersion = 1;
constexpr std::uint8_t kDtypeF32 = 0;

void write_u8(std::ostream& out, std::uint8_t v) {
    out.put(static_cast<char>(v));
}

void write_u32(std::ostream& out, std::uint32_t v) {
    char buf[4] = {static_cast<char>(v & 0xff), static_cast<char>((v >> 8) & 0xff),
                   static_cast<char>((v >> 16) & 0xff), static_cast<char>((v >> 24) & 0xff)};
    out.write(buf, 4);
}

void write_f32(std::ostream& out, float v) {
    write_u32(out, std::bit_cast<std::uint32_t>(v));
}

struct Reader {
    std::istream& in;
    std::size_t offset = 0;

    void read_bytes(char* dst, std::size_t n, const char* what) {
        in.read(dst, static_cast<std::streamsize>(n));
        if (static_cast<std::size_t>(in.gcount()) != n) {
            throw FormatError(std::string("weight file truncated at byte ") +
                              std::to_string(offset + static_cast<std::size_t>(in.gcount())) +
                              " while reading " + what);
        }
        offset += n;
    }

    std::uint8_t read_u8(const char* what) {
        char b;
        read_bytes(&b, 1, what);
        return static_cast<std::uint8_t>(b);
    }

    std::uint32_t read_u32(const char* what) {
        char buf[4];
        read_bytes(buf, 4, what);
        return static_cast<std::uint32_t>(static_cast<unsigned char>(buf[0])) |
               (static_cast<std::uint32_t>(static_cast<unsigned char>(buf[1])) << 8) |
               (static_cast<std::uint32_t>(static_cast<unsigned char>(buf[2])) << 16) |
               (static_cast<std::uint32_t>(static_cast<unsigned char>(buf[3])) << 24);
    }

    float read_f32(const char* what) {
        return std::bit_cast<float>(read_u32(what));
    }

    bool at_eof() {
        return in.peek() == std::char_traits<char>::eof();
    }
};

void write_record(std::ostream& out, const std::string& name, const Tensor& tensor) {
    write_u32(out, static_cast<std::uint32_t>(name.size()));
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    write_u8(out, kDtypeF32);
    write_u32(out, static_cast<std::uint32_t>(tensor.ndim()));
    for (std::size_t d : tensor.shape()) {
        write_u32(out, static_cast<std::uint32_t>(d));
    }
    for (std::size_t i = 0; i < tensor.numel(); ++i) {
        write_f32(out, tensor[i]);
    }
}

/// Names and tensors of everything serialized, in a deterministic order.
std::vector<std::pair<std::string, const Tensor*>> record_list(const Network& network) {
    std::vector<std::pair<std::string, const Tensor*>> records;
    for (const auto* p : network.params()) {
        records.emplace_back(p->name, &p->value);
    }
    for (const auto& [name, tensor] : network.state_tensors()) {
        records.emplace_back(name, tensor);
    }
    return records;
}

} // namespace

void save_weights(const Network& network, std::ostream& out) {
    const auto records = record_list(network);
    out.write(kMagic, 4);
    write_u32(out, kVersion);
    write_u32(out, static_cast<std::uint32_t>(records.size()));
    for (const auto& [name, tensor] : records) {
        write_record(out, name, *tensor);
    }
    if (!out) {
        throw IoError("failed writing weight stream");
    }
}

void save_weights_file(const Network& network, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw IoError("cannot open '" + path.string() + "' for writing");
    }
    save_weights(network, out);
}

void load_weights(Network& network, std::istream& in) {
    Reader reader{in};
    char magic[4];
    reader.read_bytes(magic, 4, "magic");
    if (std::memcmp(magic, kMagic, 4) != 0) {
        throw FormatError("bad magic bytes: not an RNWT weight file");
    }
    const std::uint32_t version = reader.read_u32("version");
    if (version != kVersion) {
        throw FormatError("unsupported weight file version " + std::to_string(version));
    }
    const std::uint32_t count = reader.read_u32("record count");

    std::map<std::string, std::vector<float>> staged;
    std::map<std::string, std::vector<std::size_t>> staged_shapes;
    for (std::uint32_t r = 0; r < count; ++r) {
        const std::uint32_t name_len = reader.read_u32("record name length");
        std::string name(name_len, '\0');
        reader.read_bytes(name.data(), name_len, "record name");
        const std::uint8_t dtype = reader.read_u8("record dtype");
        if (dtype != kDtypeF32) {
            throw FormatError("record '" + name + "' has unsupported dtype " +
                              std::to_string(dtype));
        }
        const std::uint32_t ndim = reader.read_u32("record ndim");
        std::vector<std::size_t> dims(ndim);
        std::size_t numel = 1;
        for (std::uint32_t d = 0; d < ndim; ++d) {
            dims[d] = reader.read_u32("record dim");
            numel *= dims[d];
        }
        std::vector<float> data(numel);
        for (std::size_t i = 0; i < numel; ++i) {
            data[i] = reader.read_f32("record data");
        }
        if (staged.count(name)) {
            throw FormatError("duplicate record '" + name + "'");
        }
        staged[name] = std::move(data);
        staged_shapes[name] = std::move(dims);
    }
    if (!reader.at_eof()) {
        throw FormatError("trailing data after " + std::to_string(count) + " records");
    }

    // Validate the record set against the target before any mutation.
    std::map<std::string, Tensor*> targets;
    for (auto* p : network.params()) {
        targets[p->name] = &p->value;
    }
    for (auto& [name, tensor] : network.state_tensors()) {
        targets[name] = tensor;
    }
    for (const auto& [name, shape] : staged_shapes) {
        auto it = targets.find(name);
        if (it == targets.end()) {
            throw FormatError("unknown parameter '" + name + "' in weight file");
        }
        if (it->second->shape() != shape) {
            throw FormatError("parameter '" + name + "' has shape mismatch");
        }
    }
    for (const auto& [name, tensor] : targets) {
        (void)tensor;
        if (!staged.count(name)) {
            throw FormatError("weight file is missing record '" + name + "'");
        }
    }

    for (auto& [name, data] : staged) {
        targets[name]->storage() = std::move(data);
    }
}

void load_weights_file(Network& network, const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw IoError("cannot open '" + path.string() + "' for reading");
    }
    load_weights(network, in);
}

} // namespace reefgrad

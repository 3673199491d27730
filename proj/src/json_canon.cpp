#include "avic/json_canon.hpp"

#include <cctype>
#include <cmath>
#include <cstdio>
#include <cstdlib>

namespace avic {

std::string format_number(double v) {
    if (!std::isfinite(v)) throw NumericError("json: cannot serialize non-finite number");
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.6g", v);
    return buf;
}

namespace {

void escape_into(std::string& out, const std::string& s) {
    out.push_back('"');
    for (char c : s) {
        switch (c) {
            case '"': out += "\\\""; break;
            case '\\': out += "\\\\"; break;
            case '\n': out += "\\n"; break;
            case '\t': out += "\\t"; break;
            case '\r': out += "\\r"; break;
            default:
                if (static_cast<unsigned char>(c) < 0x20) {
                    char buf[8];
                    std::snprintf(buf, sizeof buf, "\\u%04x", c);
                    out += buf;
                } else {
                    out.push_back(c);
                }
        }
    }
    out.push_back('"');
}

void serialize_into(std::string& out, const Json& j) {
    switch (j.kind) {
        case Json::Kind::object: {
            out.push_back('{');
            bool first = true;
            for (const auto& [k, v] : j.object) {  // std::map: sorted keys
                if (!first) out.push_back(',');
                first = false;
                escape_into(out, k);
                out.push_back(':');
                serialize_into(out, v);
            }
            out.push_back('}');
            break;
        }
        case Json::Kind::array: {
            out.push_back('[');
            for (size_t i = 0; i < j.array.size(); ++i) {
                if (i) out.push_back(',');
                serialize_into(out, j.array[i]);
            }
            out.push_back(']');
            break;
        }
        case Json::Kind::string: escape_into(out, j.str); break;
        case Json::Kind::number: out += format_number(j.num); break;
        case Json::Kind::integer: out += std::to_string(j.inum); break;
        case Json::Kind::uinteger: out += std::to_string(j.unum); break;
        case Json::Kind::boolean: out += j.boolean ? "true" : "false"; break;
    }
}

struct Parser {
    const char* p;
    const char* end;

    void skip_ws() {
        while (p < end && (*p == ' ' || *p == '\t' || *p == '\n' || *p == '\r')) ++p;
    }
    char peek() {
        skip_ws();
        if (p >= end) throw IoError("json: unexpected end of input");
        return *p;
    }
    void expect(char c) {
        if (peek() != c) throw IoError(std::string("json: expected '") + c + "' got '" + *p + "'");
        ++p;
    }

    Json parse_value() {
        char c = peek();
        if (c == '{') return parse_object();
        if (c == '[') return parse_array();
        if (c == '"') return Json::of(parse_string());
        if (c == 't' || c == 'f') return parse_bool();
        return parse_number();
    }

    Json parse_object() {
        expect('{');
        Json j = Json::obj();
        if (peek() == '}') {
            ++p;
            return j;
        }
        while (true) {
            std::string key = parse_string();
            expect(':');
            j.object.emplace(std::move(key), parse_value());
            char c = peek();
            ++p;
            if (c == '}') return j;
            if (c != ',') throw IoError("json: expected ',' or '}' in object");
        }
    }

    Json parse_array() {
        expect('[');
        Json j = Json::arr();
        if (peek() == ']') {
            ++p;
            return j;
        }
        while (true) {
            j.array.push_back(parse_value());
            char c = peek();
            ++p;
            if (c == ']') return j;
            if (c != ',') throw IoError("json: expected ',' or ']' in array");
        }
    }

    std::string parse_string() {
        expect('"');
        std::string out;
        while (p < end && *p != '"') {
            if (*p == '\\') {
                ++p;
                if (p >= end) break;
                switch (*p) {
                    case 'n': out.push_back('\n'); break;
                    case 't': out.push_back('\t'); break;
                    case 'r': out.push_back('\r'); break;
                    case '"': out.push_back('"'); break;
                    case '\\': out.push_back('\\'); break;
                    case '/': out.push_back('/'); break;
                    case 'u': {
                        if (end - p < 5) throw IoError("json: bad unicode escape");
                        int code = int(std::strtol(std::string(p + 1, p + 5).c_str(), nullptr, 16));
                        out.push_back(char(code));  // control characters only
                        p += 4;
                        break;
                    }
                    default: throw IoError("json: bad escape");
                }
                ++p;
            } else {
                out.push_back(*p++);
            }
        }
        if (p >= end) throw IoError("json: unterminated string");
        ++p;
        return out;
    }

    Json parse_bool() {
        if (end - p >= 4 && std::string(p, p + 4) == "true") {
            p += 4;
            return Json::of(true);
        }
        if (end - p >= 5 && std::string(p, p + 5) == "false") {
            p += 5;
            return Json::of(false);
        }
        throw IoError("json: bad literal");
    }

    Json parse_number() {
        const char* start = p;
        if (p < end && (*p == '-' || *p == '+')) ++p;
        bool is_int = true;
        while (p < end && (std::isdigit(static_cast<unsigned char>(*p)) || *p == '.' || *p == 'e' ||
                           *p == 'E' || *p == '-' || *p == '+')) {
            if (*p == '.' || *p == 'e' || *p == 'E') is_int = false;
            ++p;
        }
        std::string tok(start, p);
        if (tok.empty()) throw IoError("json: bad number");
        if (is_int) {
            if (tok[0] != '-') {
                errno = 0;
                uint64_t u = std::strtoull(tok.c_str(), nullptr, 10);
                if (errno == 0) return Json::of(u);
            } else {
                errno = 0;
                int64_t v = std::strtoll(tok.c_str(), nullptr, 10);
                if (errno == 0) return Json::of(v);
            }
        }
        return Json::of(std::strtod(tok.c_str(), nullptr));
    }
};

}  // namespace

std::string json_serialize(const Json& j) {
    std::string out;
    serialize_into(out, j);
    return out;
}

Json json_parse(const std::string& text) {
    Parser parser{text.data(), text.data() + text.size()};
    Json j = parser.parse_value();
    parser.skip_ws();
    if (parser.p != parser.end) throw IoError("json: trailing content");
    return j;
}

}  // namespace avic

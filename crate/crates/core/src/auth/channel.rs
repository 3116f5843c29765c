//! Framed, tagged message exchange between Alice and Bob.
//!
//! Frame: `"QKDC"`, session id u64, message type u8, key epoch u32, key index
//! u32, payload length u32, payload, 16-byte tag. All integers little-endian.
//! The tag covers every byte before it.

use std::io::{Read, Write};
use std::net::{TcpListener, TcpStream};

use crossbeam_channel::{unbounded, Receiver, Sender};

use super::{mac, verify_tag, KeyId, MacKeyPair, Tag128};
use crate::error::{Error, Result};

pub const FRAME_MAGIC: &[u8; 4] = b"QKDC";
const HEADER_LEN: usize = 25;
const TAG_LEN: usize = 16;
/// Refuse frames whose announced payload exceeds this.
pub const MAX_PAYLOAD: usize = 1 << 30;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[repr(u8)]
pub enum MessageType {
    Timestamps = 1,
    Sifting = 2,
    DecoyPositions = 3,
    Estimation = 4,
    Syndrome = 5,
    VerifyTags = 6,
    VerifyReply = 7,
    Privacy = 8,
    Control = 9,
}

impl TryFrom<u8> for MessageType {
    type Error = Error;

    fn try_from(v: u8) -> Result<Self> {
        use MessageType::*;
        Ok(match v {
            1 => Timestamps,
            2 => Sifting,
            3 => DecoyPositions,
            4 => Estimation,
            5 => Syndrome,
            6 => VerifyTags,
            7 => VerifyReply,
            8 => Privacy,
            9 => Control,
            _ => return Err(Error::Format(format!("unknown message type {v}"))),
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Frame {
    pub session_id: u64,
    pub msg_type: MessageType,
    pub key_id: KeyId,
    pub payload: Vec<u8>,
    pub tag: u128,
}

impl Frame {
    fn header(session_id: u64, msg_type: MessageType, key_id: KeyId, len: usize) -> Vec<u8> {
        let mut h = Vec::with_capacity(HEADER_LEN + len + TAG_LEN);
        h.extend_from_slice(FRAME_MAGIC);
        h.extend_from_slice(&session_id.to_le_bytes());
        h.push(msg_type as u8);
        h.extend_from_slice(&key_id.epoch.to_le_bytes());
        h.extend_from_slice(&key_id.index.to_le_bytes());
        h.extend_from_slice(&(len as u32).to_le_bytes());
        h
    }

    /// The bytes the tag covers.
    pub fn authenticated_bytes(&self) -> Vec<u8> {
        let mut b = Self::header(self.session_id, self.msg_type, self.key_id, self.payload.len());
        b.extend_from_slice(&self.payload);
        b
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut b = self.authenticated_bytes();
        b.extend_from_slice(&self.tag.to_le_bytes());
        b
    }

    pub fn decode(bytes: &[u8]) -> Result<Frame> {
        if bytes.len() < HEADER_LEN + TAG_LEN || &bytes[..4] != FRAME_MAGIC {
            return Err(Error::Format("not a channel frame".into()));
        }
        let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap());
        let len = u32_at(21) as usize;
        if bytes.len() != HEADER_LEN + len + TAG_LEN {
            return Err(Error::Format(format!(
                "frame length {} disagrees with header",
                bytes.len()
            )));
        }
        Ok(Frame {
            session_id: u64::from_le_bytes(bytes[4..12].try_into().unwrap()),
            msg_type: MessageType::try_from(bytes[12])?,
            key_id: KeyId {
                epoch: u32_at(13),
                index: u32_at(17),
            },
            payload: bytes[HEADER_LEN..HEADER_LEN + len].to_vec(),
            tag: u128::from_le_bytes(bytes[HEADER_LEN + len..].try_into().unwrap()),
        })
    }
}

/// Moves encoded frames; authentication happens above this layer.
pub trait FrameTransport {
    fn send_frame(&mut self, frame: Vec<u8>) -> Result<()>;
    fn recv_frame(&mut self) -> Result<Vec<u8>>;
}

/// In-process queue pair.
pub struct MemoryTransport {
    tx: Sender<Vec<u8>>,
    rx: Receiver<Vec<u8>>,
}

impl MemoryTransport {
    pub fn new(tx: Sender<Vec<u8>>, rx: Receiver<Vec<u8>>) -> Self {
        MemoryTransport { tx, rx }
    }

    pub fn pair() -> (MemoryTransport, MemoryTransport) {
        let (atx, brx) = unbounded();
        let (btx, arx) = unbounded();
        (MemoryTransport::new(atx, arx), MemoryTransport::new(btx, brx))
    }

    /// Frames waiting to be received.
    pub fn pending(&self) -> usize {
        self.rx.len()
    }
}

impl FrameTransport for MemoryTransport {
    fn send_frame(&mut self, frame: Vec<u8>) -> Result<()> {
        self.tx.send(frame).map_err(|_| Error::ChannelClosed)
    }

    fn recv_frame(&mut self) -> Result<Vec<u8>> {
        self.rx.recv().map_err(|_| Error::ChannelClosed)
    }
}

pub struct TcpTransport {
    stream: TcpStream,
}

impl TcpTransport {
    pub fn new(stream: TcpStream) -> Self {
        TcpTransport { stream }
    }
}

impl FrameTransport for TcpTransport {
    fn send_frame(&mut self, frame: Vec<u8>) -> Result<()> {
        self.stream.write_all(&frame)?;
        Ok(())
    }

    fn recv_frame(&mut self) -> Result<Vec<u8>> {
        let mut buf = vec![0u8; HEADER_LEN];
        self.stream.read_exact(&mut buf).map_err(|e| match e.kind() {
            std::io::ErrorKind::UnexpectedEof => Error::ChannelClosed,
            _ => e.into(),
        })?;
        let len = u32::from_le_bytes(buf[21..25].try_into().unwrap()) as usize;
        if len > MAX_PAYLOAD {
            return Err(Error::Format(format!("payload of {len} bytes exceeds limit")));
        }
        buf.resize(HEADER_LEN + len + TAG_LEN, 0);
        self.stream.read_exact(&mut buf[HEADER_LEN..])?;
        Ok(buf)
    }
}

/// One side of the authenticated channel. Outbound tags consume keys from
/// `outbound`; inbound frames are checked against `inbound`.
pub struct AuthEndpoint<T: FrameTransport> {
    session_id: u64,
    outbound: MacKeyPair,
    inbound: MacKeyPair,
    transport: T,
    alarms: usize,
    sent: Vec<KeyId>,
}

impl<T: FrameTransport> AuthEndpoint<T> {
    pub fn new(session_id: u64, outbound: MacKeyPair, inbound: MacKeyPair, transport: T) -> Self {
        AuthEndpoint {
            session_id,
            outbound,
            inbound,
            transport,
            alarms: 0,
            sent: Vec::new(),
        }
    }

    pub fn send(&mut self, msg_type: MessageType, payload: &[u8]) -> Result<KeyId> {
        let mut frame = Frame {
            session_id: self.session_id,
            msg_type,
            key_id: self.outbound.next_key_id()?,
            payload: payload.to_vec(),
            tag: 0,
        };
        let Tag128 { tag, key_id } = mac(&frame.authenticated_bytes(), &mut self.outbound)?;
        debug_assert_eq!(key_id, frame.key_id);
        frame.tag = tag;
        self.transport.send_frame(frame.encode())?;
        self.sent.push(key_id);
        Ok(key_id)
    }

    /// Next message, verified. A bad tag drops the frame and raises an alarm.
    pub fn recv(&mut self) -> Result<(MessageType, Vec<u8>)> {
        let raw = self.transport.recv_frame()?;
        let frame = Frame::decode(&raw).inspect_err(|_| self.alarms += 1)?;
        if frame.session_id != self.session_id {
            self.alarms += 1;
            return Err(Error::Authentication(format!(
                "frame for session {:#x}",
                frame.session_id
            )));
        }
        let tag = Tag128 {
            tag: frame.tag,
            key_id: frame.key_id,
        };
        if let Err(e) = verify_tag(&frame.authenticated_bytes(), &tag, &mut self.inbound) {
            self.alarms += 1;
            return Err(e);
        }
        Ok((frame.msg_type, frame.payload))
    }

    /// As [`recv`](Self::recv), failing if the message is of another type.
    pub fn recv_expect(&mut self, want: MessageType) -> Result<Vec<u8>> {
        let (got, payload) = self.recv()?;
        if got != want {
            return Err(Error::Format(format!("expected {want:?} message, got {got:?}")));
        }
        Ok(payload)
    }

    pub fn alarms(&self) -> usize {
        self.alarms
    }

    /// Key ids this endpoint has tagged with, in order.
    pub fn sent_key_ids(&self) -> &[KeyId] {
        &self.sent
    }

    pub fn outbound_keys(&self) -> &MacKeyPair {
        &self.outbound
    }

    pub fn outbound_keys_mut(&mut self) -> &mut MacKeyPair {
        &mut self.outbound
    }

    pub fn inbound_keys_mut(&mut self) -> &mut MacKeyPair {
        &mut self.inbound
    }

    pub fn transport(&self) -> &T {
        &self.transport
    }
}

/// Alice and Bob endpoints over an in-process queue pair.
pub fn channel_pair(
    session_id: u64,
    a_to_b: MacKeyPair,
    b_to_a: MacKeyPair,
) -> (AuthEndpoint<MemoryTransport>, AuthEndpoint<MemoryTransport>) {
    let (ta, tb) = MemoryTransport::pair();
    (
        AuthEndpoint::new(session_id, a_to_b.clone(), b_to_a.clone(), ta),
        AuthEndpoint::new(session_id, b_to_a, a_to_b, tb),
    )
}

/// Alice and Bob endpoints over a loopback TCP connection.
pub fn tcp_pair(
    session_id: u64,
    a_to_b: MacKeyPair,
    b_to_a: MacKeyPair,
) -> Result<(AuthEndpoint<TcpTransport>, AuthEndpoint<TcpTransport>)> {
    let listener = TcpListener::bind("127.0.0.1:0")?;
    let addr = listener.local_addr()?;
    let client = TcpStream::connect(addr)?;
    let (server, _) = listener.accept()?;
    client.set_nodelay(true)?;
    server.set_nodelay(true)?;
    Ok((
        AuthEndpoint::new(session_id, a_to_b.clone(), b_to_a.clone(), TcpTransport::new(client)),
        AuthEndpoint::new(session_id, b_to_a, a_to_b, TcpTransport::new(server)),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::auth::{K1Mode, K2Source};
    use crate::rng;
    use rand::Rng;

    fn keys(seed: u64, n: usize, mode: K1Mode) -> MacKeyPair {
        let mut r = rng::stream(seed, "chan-test");
        let pool = (0..n).map(|_| r.gen()).collect();
        MacKeyPair::new(r.gen(), K2Source::Pool(pool), mode)
    }

    #[test]
    fn frame_roundtrip() {
        let f = Frame {
            session_id: 0x1122,
            msg_type: MessageType::Syndrome,
            key_id: KeyId { epoch: 3, index: 2 },
            payload: vec![1, 2, 3],
            tag: 99,
        };
        let b = f.encode();
        assert_eq!(&b[..4], b"QKDC");
        assert_eq!(b.len(), 25 + 3 + 16);
        assert_eq!(Frame::decode(&b).unwrap(), f);
        assert!(Frame::decode(&b[..b.len() - 1]).is_err());
    }

    #[test]
    fn memory_roundtrip_both_directions() {
        let mode = K1Mode::Refresh { seed: 1 };
        let (mut a, mut b) = channel_pair(7, keys(1, 8, mode), keys(2, 8, mode));
        a.send(MessageType::Sifting, b"bases").unwrap();
        a.send(MessageType::Syndrome, &[]).unwrap();
        assert_eq!(b.recv().unwrap(), (MessageType::Sifting, b"bases".to_vec()));
        assert_eq!(b.recv_expect(MessageType::Syndrome).unwrap(), Vec::<u8>::new());
        b.send(MessageType::VerifyReply, &[0xff, 0xff]).unwrap();
        assert_eq!(a.recv().unwrap().1, vec![0xff, 0xff]);
        let epochs: Vec<u32> = a.sent_key_ids().iter().map(|k| k.epoch).collect();
        assert!(epochs.windows(2).all(|w| w[0] < w[1]));
        assert_eq!(a.alarms() + b.alarms(), 0);
    }

    #[test]
    fn tcp_roundtrip() {
        let mode = K1Mode::Refresh { seed: 4 };
        let (mut a, mut b) = tcp_pair(9, keys(3, 4, mode), keys(4, 4, mode)).unwrap();
        let payload: Vec<u8> = (0..5000u32).map(|i| i as u8).collect();
        let h = std::thread::spawn(move || {
            let got = b.recv_expect(MessageType::Estimation).unwrap();
            b.send(MessageType::Control, &got[..10]).unwrap();
        });
        a.send(MessageType::Estimation, &payload).unwrap();
        assert_eq!(a.recv_expect(MessageType::Control).unwrap(), payload[..10].to_vec());
        h.join().unwrap();
    }

    #[test]
    fn flipped_bit_never_verifies() {
        let mode = K1Mode::Refresh { seed: 11 };
        let trials = 10_000;
        let a2b = keys(5, trials, mode);
        let mut rx_keys = a2b.clone();
        let mut tx_keys = a2b;
        let mut r = rng::stream(6, "flip");
        let mut forged = 0;
        for _ in 0..trials {
            let mut msg = vec![0u8; 64];
            r.fill(&mut msg[..]);
            let tag = mac(&msg, &mut tx_keys).unwrap();
            let bit = r.gen_range(0..msg.len() * 8);
            msg[bit / 8] ^= 1 << (bit % 8);
            if verify_tag(&msg, &tag, &mut rx_keys).is_ok() {
                forged += 1;
            }
        }
        assert_eq!(forged, 0);
    }

    #[test]
    fn tampered_frame_raises_alarm() {
        let mode = K1Mode::Fixed;
        let a2b = keys(7, 4, mode);
        let b2a = keys(8, 4, mode);
        let (atx, mitm_rx) = unbounded();
        let (mitm_tx, brx) = unbounded();
        let (btx, arx) = unbounded();
        let mut a = AuthEndpoint::new(1, a2b.clone(), b2a.clone(), MemoryTransport::new(atx, arx));
        let mut b = AuthEndpoint::new(1, b2a, a2b, MemoryTransport::new(btx, brx));
        a.send(MessageType::Privacy, b"seed bits").unwrap();
        let mut raw: Vec<u8> = mitm_rx.recv().unwrap();
        raw[HEADER_LEN] ^= 0x04;
        mitm_tx.send(raw).unwrap();
        assert!(matches!(b.recv(), Err(Error::Authentication(_))));
        assert_eq!(b.alarms(), 1);
    }

    #[test]
    fn wrong_session_rejected() {
        let mode = K1Mode::Fixed;
        let (atx, brx) = unbounded();
        let (btx, arx) = unbounded();
        let mut a = AuthEndpoint::new(1, keys(9, 2, mode), keys(10, 2, mode), MemoryTransport::new(atx, arx));
        let mut b = AuthEndpoint::new(2, keys(10, 2, mode), keys(9, 2, mode), MemoryTransport::new(btx, brx));
        a.send(MessageType::Control, b"x").unwrap();
        assert!(matches!(b.recv(), Err(Error::Authentication(_))));
        assert_eq!(b.alarms(), 1);
    }
}

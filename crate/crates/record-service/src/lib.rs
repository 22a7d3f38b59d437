//! Records human demonstrations over a websocket: the server streams frames
//! from a live simulator, applies the client's keymask each tick and saves
//! finished episodes as dataset files.

pub mod protocol;
pub mod server;
pub mod session;

pub use protocol::{keymask_to_action, Command, FrameMessage, Reply};
pub use server::{serve, ServeOptions, TickMode};
pub use session::Session;
